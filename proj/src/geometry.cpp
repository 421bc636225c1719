#include "bevloc/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bevloc::geom {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
}

Intrinsics Intrinsics::Square(int resolution, double focal_px) {
  Intrinsics k;
  k.width = resolution;
  k.height = resolution;
  k.focal_px = focal_px;
  k.principal_point = Eigen::Vector2d(resolution / 2.0, resolution / 2.0);
  return k;
}

void Intrinsics::Validate() const {
  if (!(focal_px > 0.0)) throw std::invalid_argument("intrinsics: focal_px must be > 0");
  if (width < 1 || height < 1) throw std::invalid_argument("intrinsics: width and height must be >= 1");
}

Eigen::Vector2d CameraPose::Project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d cam = CameraPoint(world);
  return {intrinsics.focal_px * cam.x() / cam.z() + intrinsics.principal_point.x(),
          intrinsics.focal_px * cam.y() / cam.z() + intrinsics.principal_point.y()};
}

void CameraPose::Validate() const {
  intrinsics.Validate();
  if (std::abs(orientation.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("camera pose: quaternion must be unit norm");
}

Eigen::Quaterniond CanonicalizeQuaternion(const Eigen::Quaterniond& q) {
  const double comps[4] = {q.w(), q.x(), q.y(), q.z()};
  for (double c : comps) {
    if (c > 0.0) return q;
    if (c < 0.0) return Eigen::Quaterniond(-q.w(), -q.x(), -q.y(), -q.z());
  }
  return q;
}

CameraPose LookAt(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                  const Intrinsics& intrinsics) {
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d forward = target - position;
  const double len = forward.norm();
  if (len <= 0.0) throw std::invalid_argument("look-at: position equals target");
  forward /= len;
  Eigen::Vector3d right = forward.cross(up);
  const double rlen = right.norm();
  if (rlen < 1e-12) throw std::invalid_argument("look-at: view direction is vertical; use BevPose");
  right /= rlen;
  const Eigen::Vector3d down = forward.cross(right);

  Eigen::Matrix3d world_to_cam;
  world_to_cam.row(0) = right;
  world_to_cam.row(1) = down;
  world_to_cam.row(2) = forward;

  CameraPose pose;
  pose.position = position;
  pose.orientation = CanonicalizeQuaternion(Eigen::Quaterniond(world_to_cam).normalized());
  pose.intrinsics = intrinsics;
  return pose;
}

void FlightConfig::Validate() const {
  if (!(elevation_deg > 0.0 && elevation_deg < 90.0))
    throw std::invalid_argument("flight config: elevation_deg must be in (0, 90)");
  if (n_loops < 1) throw std::invalid_argument("flight config: n_loops must be >= 1");
  if (n_frames < n_loops) throw std::invalid_argument("flight config: n_frames must be >= n_loops");
  if (!(radius_end > 0.0)) throw std::invalid_argument("flight config: radius_end must be > 0");
  if (!(radius_start >= radius_end))
    throw std::invalid_argument("flight config: radius_start must be >= radius_end");
  intrinsics.Validate();
}

std::vector<CameraPose> SpiralPath(const FlightConfig& config) {
  config.Validate();
  const double tan_elev = std::tan(config.elevation_deg * kDegToRad);
  std::vector<CameraPose> poses;
  poses.reserve(config.n_frames);
  for (int i = 0; i < config.n_frames; ++i) {
    const double azimuth = 2.0 * M_PI * config.n_loops * i / config.n_frames;
    const double t = config.n_frames > 1 ? static_cast<double>(i) / (config.n_frames - 1) : 0.0;
    const double radius = config.radius_start + (config.radius_end - config.radius_start) * t;
    const double altitude = radius * tan_elev;
    const Eigen::Vector3d position =
        config.target_center +
        Eigen::Vector3d(radius * std::cos(azimuth), radius * std::sin(azimuth), altitude);
    poses.push_back(LookAt(position, config.target_center, config.intrinsics));
  }
  return poses;
}

CameraPose BevPose(const Eigen::Vector3d& scene_center, double height, double yaw_deg,
                   const Intrinsics& intrinsics) {
  if (!(height > 0.0)) throw std::invalid_argument("bev pose: height must be > 0");
  intrinsics.Validate();
  // Reduce in degrees first so yaw 360 reproduces yaw 0 bit-exactly.
  double yaw = std::fmod(yaw_deg, 360.0);
  if (yaw < 0.0) yaw += 360.0;
  const double half = 0.5 * yaw * kDegToRad;
  // Rotation by pi about the in-plane axis (cos(yaw/2), sin(yaw/2), 0): sends
  // world +z to camera -z (camera looks straight down) and applies the yaw.
  CameraPose pose;
  pose.position = scene_center + Eigen::Vector3d(0.0, 0.0, height);
  pose.orientation = CanonicalizeQuaternion(
      Eigen::Quaterniond(0.0, std::cos(half), std::sin(half), 0.0).normalized());
  pose.intrinsics = intrinsics;
  return pose;
}

std::vector<CameraPose> BevPoseSequence(const Eigen::Vector3d& scene_center, int n, BevMode mode,
                                        double base_height, double height_growth,
                                        double yaw_step_deg, const Intrinsics& intrinsics) {
  if (n <= 0) throw std::invalid_argument("bev pose sequence: n must be >= 1");
  std::vector<CameraPose> poses;
  poses.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double height = base_height + height_growth * i;
    const double yaw = mode == BevMode::kTrain ? yaw_step_deg * i : 0.0;
    poses.push_back(BevPose(scene_center, height, yaw, intrinsics));
  }
  return poses;
}

Image PolarTransform(const Image& satellite, int out_width, int out_height) {
  if (satellite.width != satellite.height)
    throw std::invalid_argument("polar transform: input must be square");
  if (out_width < 1 || out_height < 1)
    throw std::invalid_argument("polar transform: output size must be positive");
  const double cx = (satellite.width - 1) / 2.0;
  const double cy = (satellite.height - 1) / 2.0;
  const double max_radius = (satellite.width - 1) / 2.0;
  const Eigen::Vector3d background = Eigen::Vector3d::Zero();
  Image out(out_width, out_height);
  for (int r = 0; r < out_height; ++r) {
    const double radius = out_height > 1 ? max_radius * r / (out_height - 1) : 0.0;
    for (int c = 0; c < out_width; ++c) {
      const double phi = 2.0 * M_PI * c / out_width;
      const double x = cx + radius * std::sin(phi);
      const double y = cy - radius * std::cos(phi);
      out.SetPixel(c, r, BilinearSample(satellite, x, y, background));
    }
  }
  return out;
}

Image SphericalTransform(const Image& panorama, int out_width, int out_height) {
  if (panorama.width != 2 * panorama.height)
    throw std::invalid_argument("spherical transform: panorama must have 2:1 aspect ratio");
  if (out_width < 1 || out_height < 1)
    throw std::invalid_argument("spherical transform: output size must be positive");
  const double ocx = (out_width - 1) / 2.0;
  const double ocy = (out_height - 1) / 2.0;
  const double max_radius = std::min(ocx, ocy);
  const Eigen::Vector3d background = Eigen::Vector3d::Zero();
  Image out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const double dx = x - ocx;
      const double dy = y - ocy;
      const double rho = std::sqrt(dx * dx + dy * dy);
      double phi = std::atan2(dx, -dy);  // 0 points up, increases clockwise
      if (phi < 0.0) phi += 2.0 * M_PI;
      const double col = phi / (2.0 * M_PI) * (panorama.width - 1);
      // rho = 0 hits the nadir (bottom) row; corners clamp at the zenith row.
      const double row =
          std::max(0.0, (panorama.height - 1) * (1.0 - rho / max_radius));
      out.SetPixel(x, y, BilinearSample(panorama, col, row, background));
    }
  }
  return out;
}

void WritePoseTable(const std::filesystem::path& path, const std::vector<CameraPose>& poses) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  char line[512];
  for (const auto& p : poses) {
    std::snprintf(line, sizeof(line),
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d %d\n",
                  p.position.x(), p.position.y(), p.position.z(), p.orientation.w(),
                  p.orientation.x(), p.orientation.y(), p.orientation.z(), p.intrinsics.focal_px,
                  p.intrinsics.principal_point.x(), p.intrinsics.principal_point.y(),
                  p.intrinsics.width, p.intrinsics.height);
    out << line;
  }
}

std::vector<CameraPose> ReadPoseTable(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<CameraPose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    CameraPose p;
    double qw, qx, qy, qz;
    if (!(ss >> p.position.x() >> p.position.y() >> p.position.z() >> qw >> qx >> qy >> qz >>
          p.intrinsics.focal_px >> p.intrinsics.principal_point.x() >>
          p.intrinsics.principal_point.y() >> p.intrinsics.width >> p.intrinsics.height)) {
      throw std::runtime_error("malformed pose table line: " + line);
    }
    p.orientation = Eigen::Quaterniond(qw, qx, qy, qz);
    poses.push_back(p);
  }
  return poses;
}

}  // namespace bevloc::geom
