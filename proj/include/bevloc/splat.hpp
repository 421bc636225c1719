#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "bevloc/geometry.hpp"
#include "bevloc/image.hpp"

namespace bevloc::splat {

// Splatting constants, kept together.
inline constexpr double kTransmittanceMin = 1e-4;   // per-pixel early termination
inline constexpr double kCovarianceFloorPx2 = 0.3;  // diagonal floor, also guards degeneracy
inline constexpr double kAlphaMin = 1.0 / 255.0;    // contributions below this are dropped
inline constexpr double kAlphaMax = 0.999;          // keeps (1 - alpha) invertible in the backward pass
inline constexpr double kNearClip = 1e-3;           // Gaussians behind this depth are excluded

struct Gaussian3D {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();  // log of per-axis stddev
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity_logit = 0.0;  // opacity = sigmoid(opacity_logit)
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);  // clamped to [0,1] at render time

  double Opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
  void Validate() const;
};

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d max = Eigen::Vector3d::Constant(1.0);

  Eigen::Vector3d Center() const { return 0.5 * (min + max); }
  Eigen::Vector3d Extent() const { return max - min; }
  Eigen::Vector3d Clamp(const Eigen::Vector3d& p) const {
    return p.cwiseMax(min).cwiseMin(max);
  }
};

struct GaussianScene {
  std::vector<Gaussian3D> gaussians;
  Aabb bounds;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

Image Render(const GaussianScene& scene, const geom::CameraPose& pose);

// Render plus per-pixel compositing diagnostics.
struct RenderResult {
  Image image;
  std::vector<double> transmittance;  // residual T per pixel
  std::vector<double> alpha_accum;    // sum of alpha_i * T_i per pixel
};
RenderResult RenderDetailed(const GaussianScene& scene, const geom::CameraPose& pose);

// Gradient of a scalar loss with respect to one Gaussian's parameters, given
// the upstream per-pixel gradient dL/dimage. Rotation gradient is with respect
// to the raw stored (w,x,y,z) components; normalization is part of the chain.
struct GaussianGrads {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();  // (w,x,y,z)
  double opacity_logit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};
std::vector<GaussianGrads> RenderGradients(const GaussianScene& scene,
                                           const geom::CameraPose& pose,
                                           const Image& loss_image_grad);

struct FitConfig {
  int n_gaussians = 512;
  int iters = 500;
  double step_size = 1.0;
  uint64_t seed = 0;
  std::optional<Aabb> bounds;                   // default: derived from the camera rig
  std::optional<Eigen::Vector3d> background;    // default: per-channel median of the frames
  // Per-parameter-group step multipliers (the mean group is additionally
  // scaled by the bounds extent).
  double lr_mean = 0.02;
  double lr_log_scale = 0.02;
  double lr_rotation = 0.01;
  double lr_opacity = 0.10;
  double lr_color = 0.05;
  double init_scale_fraction = 0.06;  // initial stddev as a fraction of the bounds extent
};

struct FitResult {
  GaussianScene scene;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // loss after each iteration, non-increasing
};

// Fits a fixed-count Gaussian scene to the frames by minimizing the mean L1
// photometric error with diagonally preconditioned gradient descent and a
// backtracking step rule (halve on increase, max 10 halvings, skip if still
// increasing), so the recorded loss never increases.
FitResult FitScene(const std::vector<Image>& frames, const std::vector<geom::CameraPose>& poses,
                   const FitConfig& config);

struct BevConfig {
  geom::Intrinsics intrinsics = geom::Intrinsics::Square(64, 64.0);
  double base_height = -1.0;       // <= 0: derived so the scene bounds fill the frame
  double height_growth = -1.0;     // < 0: 2% of base_height per frame
  double yaw_step_deg = -1.0;      // < 0: 360 / n per frame (train mode only)
  double crop_fraction_train = 0.8;
  double crop_fraction_test = 1.0;
  std::optional<Eigen::Vector3d> center;  // default: bounds center at ground level
};

struct BEVSequence {
  std::vector<Image> frames;
  std::vector<geom::CameraPose> poses;
  geom::BevMode mode = geom::BevMode::kTest;
  double crop_fraction = 1.0;
};

// The full video-to-BEV transformation: fit a scene to the drone video, build
// the BEV pose sequence (one pose per input frame), render, crop, and resize
// back to the render resolution.
BEVSequence VideoToBev(const std::vector<Image>& video_frames,
                       const std::vector<geom::CameraPose>& video_poses, const FitConfig& fit_config,
                       const BevConfig& bev_config, geom::BevMode mode,
                       FitResult* fit_result_out = nullptr);

// Versioned text table of per-Gaussian parameters.
void WriteSceneFile(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene ReadSceneFile(const std::filesystem::path& path);

}  // namespace bevloc::splat
