#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "bevloc/geometry.hpp"
#include "bevloc/image.hpp"
#include "bevloc/splat.hpp"

namespace bevloc::synth {

// Axis-aligned colored box (building or ground patch) of a procedural location.
struct BoxSpec {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  Eigen::Vector3d roof_color = Eigen::Vector3d::Constant(0.5);
  Eigen::Vector3d wall_color = Eigen::Vector3d::Constant(0.3);
  int pattern_id = 0;
  bool is_target = false;
  bool is_ground = false;
};

struct Location {
  int id = 0;
  uint64_t seed = 0;
  std::vector<BoxSpec> layout;  // nonempty; exactly one box has is_target

  const BoxSpec& Target() const;
};

splat::Aabb WorldBounds();
Eigen::Vector3d WorldBackground();

// Deterministic in (seed, id): one target building, 3-8 distractor buildings,
// ground patches, colors from a shared palette so locations differ mainly by
// arrangement and pattern.
Location GenerateLocation(uint64_t seed, int id);

std::vector<Location> MakeLocations(uint64_t seed, int count);

// Box faces sampled by Gaussians, ready for rendering.
splat::GaussianScene LocationToScene(const Location& location);

// Camera conventions shared by drone videos, satellite images, and negatives.
struct CaptureConfig {
  int resolution = 64;
  double focal_px = 64.0;
  double radius_start = 13.0;
  double radius_end = 9.0;
  int n_loops = 3;
  double satellite_height_mult = 4.0;  // satellite = overhead render at this multiple
                                       // of the BEV height with matched focal
  geom::Intrinsics Intrinsics() const { return geom::Intrinsics::Square(resolution, focal_px); }
};

// Overhead height at which the world bounds fill the frame (plus margin);
// shared by BEV rendering and the satellite convention.
double BevBaseHeight(const CaptureConfig& capture);

std::vector<geom::CameraPose> DroneVideoPath(const Location& location, double elevation_deg,
                                             int n_frames, const CaptureConfig& capture);

Image RenderSatellite(const Location& location, const CaptureConfig& capture);

// Renders the drone video; when occlusion_fraction > 0, that fraction of
// frames (seeded per frame) gets a distractor box inserted between the camera
// and the target.
std::vector<Image> RenderDroneVideo(const Location& location, double elevation_deg, int n_frames,
                                    const CaptureConfig& capture, double occlusion_fraction = 0.0,
                                    uint64_t occlusion_seed = 0);

enum class View { kBev, kSatellite };

// Hard negative synthesis: renders m perturbed copies of the location (roof
// colors jittered within a hue band, footprints scaled +-15%, patterns swapped
// within the same family) from the requested view convention. Deterministic in
// seed.
std::vector<Image> SynthesizeNegatives(const Location& location, View view, int m, uint64_t seed,
                                       const CaptureConfig& capture);

struct DatasetOptions {
  std::filesystem::path out_dir;
  int fps = 2;  // must be one of 2, 5, 10
  double video_seconds = 12.0;
  std::vector<double> elevations = {30.0, 45.0};
  int negatives_per_view = 32;      // train split only; 0 disables
  double occlusion_fraction = 0.0;  // test split only; adds drone_<elev>_occl dirs
  uint64_t seed = 0;
  CaptureConfig capture;
};

struct DatasetManifest {
  int format_version = 1;
  uint64_t seed = 0;
  int fps = 2;
  double video_seconds = 12.0;
  int frames_per_video = 24;
  std::vector<double> elevations;
  int resolution = 64;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  int negatives_per_view = 0;
  double occlusion_fraction = 0.0;

  void Validate() const;  // checks train/test id disjointness
};

// Renders the full dataset tree:
//   out_dir/{train,test}/drone_<elev>/<id>/frame_###.png
//   out_dir/{train,test}/satellite/<id>/satellite.png
//   out_dir/train/synth_{bev,satellite}/<id>/neg_##.png
//   out_dir/test/drone_<elev>_occl/... (when occlusion_fraction > 0)
//   out_dir/manifest.json
DatasetManifest RenderDataset(const std::vector<Location>& train_locations,
                              const std::vector<Location>& test_locations,
                              const DatasetOptions& options);

std::string ElevationDirName(double elevation_deg, bool occluded = false);
std::string LocationDirName(int id);

void WriteManifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest ReadManifest(const std::filesystem::path& path);

}  // namespace bevloc::synth
