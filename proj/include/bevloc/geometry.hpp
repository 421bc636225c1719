#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <filesystem>
#include <vector>

#include "bevloc/image.hpp"

namespace bevloc::geom {

struct Intrinsics {
  double focal_px = 64.0;
  Eigen::Vector2d principal_point{32.0, 32.0};
  int width = 64;
  int height = 64;

  static Intrinsics Square(int resolution, double focal_px);
  void Validate() const;
};

// Rigid camera pose. `orientation` rotates world coordinates into the camera
// frame (x right, y down, z forward): x_cam = orientation * (x_world - position).
// World up is +z.
struct CameraPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Intrinsics intrinsics;

  Eigen::Matrix3d WorldToCameraRotation() const { return orientation.toRotationMatrix(); }
  Eigen::Vector3d CameraPoint(const Eigen::Vector3d& world) const {
    return orientation * (world - position);
  }
  // Optical axis expressed in world coordinates.
  Eigen::Vector3d ViewDirection() const { return orientation.conjugate() * Eigen::Vector3d::UnitZ(); }
  // Perspective projection to continuous pixel coordinates (pixel (i,j) has
  // center (i+0.5, j+0.5)). Caller must ensure the point is in front.
  Eigen::Vector2d Project(const Eigen::Vector3d& world) const;

  void Validate() const;
};

// Sign-canonical form: first nonzero of (w,x,y,z) is positive.
Eigen::Quaterniond CanonicalizeQuaternion(const Eigen::Quaterniond& q);

// Orientation looking from `position` toward `target` with world +z as the up
// hint. Degenerate (vertical) view directions are rejected; use BevPose.
CameraPose LookAt(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                  const Intrinsics& intrinsics);

struct FlightConfig {
  double elevation_deg = 45.0;
  int n_loops = 3;
  int n_frames = 24;
  double radius_start = 12.0;
  double radius_end = 8.0;
  Eigen::Vector3d target_center = Eigen::Vector3d::Zero();
  Intrinsics intrinsics;

  void Validate() const;
};

// Spiral orbit around target_center: azimuth sweeps n_loops full turns
// (azimuth_i = 360 * n_loops * i / n_frames), the horizontal radius
// interpolates linearly from radius_start at the first frame to radius_end at
// the last, and altitude keeps tan(elevation) = altitude / radius. Every pose
// looks at target_center.
std::vector<CameraPose> SpiralPath(const FlightConfig& config);

// Camera at scene_center + height * up, looking straight down. At yaw 0 world
// +x maps to image right and world +y to image up; yaw rotates the camera
// about the vertical axis by yaw_deg.
CameraPose BevPose(const Eigen::Vector3d& scene_center, double height, double yaw_deg,
                   const Intrinsics& intrinsics);

enum class BevMode { kTrain, kTest };

// n downward poses with height base_height + i * height_growth. Train mode
// advances yaw by yaw_step_deg per frame; test mode keeps yaw 0.
std::vector<CameraPose> BevPoseSequence(const Eigen::Vector3d& scene_center, int n, BevMode mode,
                                        double base_height, double height_growth,
                                        double yaw_step_deg, const Intrinsics& intrinsics);

// Satellite-to-ground style resampling: output row r samples radius
// proportional to r, output column c samples azimuth proportional to c.
// Input must be square.
Image PolarTransform(const Image& satellite, int out_width, int out_height);

// Equirectangular panorama (2:1) to a top-down view: the output center maps to
// the nadir row, output azimuth maps to panorama column, output radius maps
// monotonically to panorama row.
Image SphericalTransform(const Image& panorama, int out_width, int out_height);

// Plain-text pose table, one pose per line:
// px py pz qw qx qy qz focal cx cy width height
void WritePoseTable(const std::filesystem::path& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> ReadPoseTable(const std::filesystem::path& path);

}  // namespace bevloc::geom
