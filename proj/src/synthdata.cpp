#include "bevloc/synthdata.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bevloc/util.hpp"

namespace bevloc::synth {

namespace {

using json = nlohmann::json;

constexpr double kWorldHalfExtent = 8.0;

// Shared roof palette: locations are told apart by arrangement and pattern
// more than by unique colors.
const Eigen::Vector3d kRoofPalette[] = {
    {0.62, 0.25, 0.20}, {0.45, 0.47, 0.50}, {0.78, 0.68, 0.50}, {0.85, 0.85, 0.82},
    {0.20, 0.45, 0.45}, {0.45, 0.50, 0.28}, {0.20, 0.28, 0.50}, {0.72, 0.45, 0.30},
};
constexpr int kNumRoofColors = 8;

const Eigen::Vector3d kPatchPalette[] = {
    {0.50, 0.50, 0.52}, {0.60, 0.55, 0.42}, {0.36, 0.50, 0.32}, {0.55, 0.45, 0.35},
};
constexpr int kNumPatchColors = 4;

// Patterns grouped in two families: {0,1,2} area fills, {3,4,5} structured.
constexpr int kPatternFamilies[2][3] = {{0, 1, 2}, {3, 4, 5}};

int PatternFamily(int pattern_id) { return pattern_id < 3 ? 0 : 1; }

Eigen::Vector3d AccentColor(const Eigen::Vector3d& base) {
  return (base * 0.65).cwiseMax(0.0);
}

Eigen::Vector3d PatternColor(int pattern_id, double u, double v, const Eigen::Vector3d& base) {
  const Eigen::Vector3d accent = AccentColor(base);
  switch (pattern_id) {
    case 0:
      return base;
    case 1:
      return static_cast<int>(std::floor(u * 4.0)) % 2 == 0 ? base : accent;
    case 2:
      return static_cast<int>(std::floor(v * 4.0)) % 2 == 0 ? base : accent;
    case 3:
      return (static_cast<int>(std::floor(u * 4.0)) + static_cast<int>(std::floor(v * 4.0))) % 2 ==
                     0
                 ? base
                 : accent;
    case 4:
      return std::max(std::abs(u - 0.5), std::abs(v - 0.5)) > 0.33 ? accent : base;
    case 5:
      return (std::abs(u - v) < 0.18 || std::abs(u + v - 1.0) < 0.18) ? accent : base;
    default:
      throw std::invalid_argument("unknown pattern id");
  }
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

int UniformInt(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

bool OverlapsXy(const BoxSpec& a, const BoxSpec& b, double margin) {
  return std::abs(a.center.x() - b.center.x()) < 0.5 * (a.size.x() + b.size.x()) + margin &&
         std::abs(a.center.y() - b.center.y()) < 0.5 * (a.size.y() + b.size.y()) + margin;
}

Eigen::Vector3d WallColorFor(const Eigen::Vector3d& roof) {
  return 0.5 * roof + Eigen::Vector3d::Constant(0.5 * 0.42);
}

void EmitFaceGrid(std::vector<splat::Gaussian3D>& out, const Eigen::Vector3d& origin,
                  const Eigen::Vector3d& axis_u, const Eigen::Vector3d& axis_v, double len_u,
                  double len_v, double spacing, double thin_sigma,
                  const std::function<Eigen::Vector3d(double, double)>& color_at) {
  const int nu = std::max(2, static_cast<int>(std::lround(len_u / spacing)));
  const int nv = std::max(2, static_cast<int>(std::lround(len_v / spacing)));
  const double su = len_u / nu;
  const double sv = len_v / nv;
  const Eigen::Vector3d normal = axis_u.cross(axis_v);
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      const double u = (i + 0.5) / nu;
      const double v = (j + 0.5) / nv;
      splat::Gaussian3D g;
      g.mean = origin + axis_u * (u * len_u) + axis_v * (v * len_v);
      // Axis-aligned boxes: scales per world axis, thin along the face normal.
      Eigen::Vector3d sigma;
      for (int a = 0; a < 3; ++a) {
        if (std::abs(normal[a]) > 0.5)
          sigma[a] = thin_sigma;
        else if (std::abs(axis_u[a]) > 0.5)
          sigma[a] = 0.55 * su;
        else
          sigma[a] = 0.55 * sv;
      }
      g.log_scale = sigma.array().log();
      g.rotation = Eigen::Quaterniond::Identity();
      g.opacity_logit = 4.0;
      g.color = color_at(u, v);
      out.push_back(g);
    }
  }
}

void EmitBox(std::vector<splat::Gaussian3D>& out, const BoxSpec& box) {
  const Eigen::Vector3d half = 0.5 * box.size;
  const Eigen::Vector3d top_origin =
      box.center + Eigen::Vector3d(-half.x(), -half.y(), half.z());
  const double top_spacing = box.is_ground ? 0.8 : 0.45;
  EmitFaceGrid(out, top_origin, Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), box.size.x(),
               box.size.y(), top_spacing, 0.03, [&](double u, double v) {
                 return PatternColor(box.pattern_id, u, v, box.roof_color);
               });
  if (box.is_ground) return;

  const auto wall = [&](double, double) { return box.wall_color; };
  const double ws = 0.6;
  // x- and x+ faces
  EmitFaceGrid(out, box.center + Eigen::Vector3d(-half.x(), -half.y(), -half.z()),
               Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), box.size.y(), box.size.z(), ws,
               0.03, wall);
  EmitFaceGrid(out, box.center + Eigen::Vector3d(half.x(), -half.y(), -half.z()),
               Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), box.size.y(), box.size.z(), ws,
               0.03, wall);
  // y- and y+ faces
  EmitFaceGrid(out, box.center + Eigen::Vector3d(-half.x(), -half.y(), -half.z()),
               Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitZ(), box.size.x(), box.size.z(), ws,
               0.03, wall);
  EmitFaceGrid(out, box.center + Eigen::Vector3d(-half.x(), half.y(), -half.z()),
               Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitZ(), box.size.x(), box.size.z(), ws,
               0.03, wall);
}

// RGB <-> HSV on [0,1] channels.
Eigen::Vector3d RgbToHsv(const Eigen::Vector3d& rgb) {
  const double mx = rgb.maxCoeff();
  const double mn = rgb.minCoeff();
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 1e-12) {
    if (mx == rgb[0])
      h = std::fmod((rgb[1] - rgb[2]) / delta, 6.0);
    else if (mx == rgb[1])
      h = (rgb[2] - rgb[0]) / delta + 2.0;
    else
      h = (rgb[0] - rgb[1]) / delta + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = mx > 1e-12 ? delta / mx : 0.0;
  return {h, s, mx};
}

Eigen::Vector3d HsvToRgb(const Eigen::Vector3d& hsv) {
  const double h = std::fmod(std::fmod(hsv[0], 1.0) + 1.0, 1.0) * 6.0;
  const double s = std::clamp(hsv[1], 0.0, 1.0);
  const double v = std::clamp(hsv[2], 0.0, 1.0);
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Eigen::Vector3d JitterColor(std::mt19937_64& rng, const Eigen::Vector3d& rgb, double hue_band,
                            double sat_band, double val_band) {
  Eigen::Vector3d hsv = RgbToHsv(rgb);
  hsv[0] += Uniform(rng, -hue_band, hue_band);
  hsv[1] *= 1.0 + Uniform(rng, -sat_band, sat_band);
  hsv[2] *= 1.0 + Uniform(rng, -val_band, val_band);
  return HsvToRgb(hsv);
}

geom::CameraPose SatellitePose(const CaptureConfig& capture) {
  const double bev_height = BevBaseHeight(capture);
  geom::Intrinsics k = capture.Intrinsics();
  k.focal_px *= capture.satellite_height_mult;  // high pose, matched framing:
                                                // quasi-orthographic
  const Eigen::Vector3d center(0.0, 0.0, 0.0);
  return geom::BevPose(center, capture.satellite_height_mult * bev_height, 0.0, k);
}

}  // namespace

const BoxSpec& Location::Target() const {
  for (const auto& b : layout)
    if (b.is_target) return b;
  throw std::logic_error("location has no target building");
}

splat::Aabb WorldBounds() {
  splat::Aabb box;
  box.min = Eigen::Vector3d(-kWorldHalfExtent, -kWorldHalfExtent, 0.0);
  box.max = Eigen::Vector3d(kWorldHalfExtent, kWorldHalfExtent, 6.0);
  return box;
}

Eigen::Vector3d WorldBackground() { return {0.30, 0.38, 0.26}; }

Location GenerateLocation(uint64_t seed, int id) {
  Location loc;
  loc.id = id;
  loc.seed = MixSeed(seed, static_cast<uint64_t>(id));
  std::mt19937_64 rng(loc.seed);

  // Ground base spanning the world.
  BoxSpec ground;
  ground.center = Eigen::Vector3d(0.0, 0.0, 0.01);
  ground.size = Eigen::Vector3d(2.0 * kWorldHalfExtent, 2.0 * kWorldHalfExtent, 0.02);
  Eigen::Vector3d base_ground(0.32, 0.42, 0.28);
  ground.roof_color = JitterColor(rng, base_ground, 0.02, 0.10, 0.08);
  ground.pattern_id = 0;
  ground.is_ground = true;
  loc.layout.push_back(ground);

  const int n_patches = UniformInt(rng, 2, 4);
  for (int i = 0; i < n_patches; ++i) {
    BoxSpec patch;
    patch.size = Eigen::Vector3d(Uniform(rng, 2.0, 6.0), Uniform(rng, 2.0, 6.0), 0.02);
    patch.center = Eigen::Vector3d(Uniform(rng, -6.0, 6.0), Uniform(rng, -6.0, 6.0), 0.04);
    patch.roof_color = JitterColor(rng, kPatchPalette[UniformInt(rng, 0, kNumPatchColors - 1)],
                                   0.015, 0.08, 0.08);
    patch.pattern_id = 0;
    patch.is_ground = true;
    loc.layout.push_back(patch);
  }

  BoxSpec target;
  target.size = Eigen::Vector3d(Uniform(rng, 2.2, 4.0), Uniform(rng, 2.2, 4.0),
                                Uniform(rng, 1.8, 3.2));
  target.center = Eigen::Vector3d(Uniform(rng, -1.5, 1.5), Uniform(rng, -1.5, 1.5),
                                  target.size.z() / 2.0);
  target.roof_color = kRoofPalette[UniformInt(rng, 0, kNumRoofColors - 1)];
  target.wall_color = WallColorFor(target.roof_color);
  target.pattern_id = UniformInt(rng, 0, 5);
  target.is_target = true;
  loc.layout.push_back(target);

  std::vector<BoxSpec> buildings{target};
  const int n_distractors = UniformInt(rng, 3, 8);
  for (int i = 0; i < n_distractors; ++i) {
    BoxSpec b;
    b.size = Eigen::Vector3d(Uniform(rng, 1.2, 3.0), Uniform(rng, 1.2, 3.0),
                             Uniform(rng, 1.0, 2.8));
    b.roof_color = kRoofPalette[UniformInt(rng, 0, kNumRoofColors - 1)];
    b.wall_color = WallColorFor(b.roof_color);
    b.pattern_id = UniformInt(rng, 0, 5);
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      const double angle = Uniform(rng, 0.0, 2.0 * M_PI);
      const double radius = Uniform(rng, 2.8, 6.2);
      b.center = Eigen::Vector3d(radius * std::cos(angle), radius * std::sin(angle),
                                 b.size.z() / 2.0);
      placed = true;
      for (const auto& other : buildings)
        if (OverlapsXy(b, other, 0.4)) placed = false;
    }
    if (!placed) continue;  // crowded layout: fewer distractors is acceptable
    buildings.push_back(b);
    loc.layout.push_back(b);
  }
  return loc;
}

std::vector<Location> MakeLocations(uint64_t seed, int count) {
  std::vector<Location> out;
  out.reserve(count);
  for (int id = 0; id < count; ++id) out.push_back(GenerateLocation(seed, id));
  return out;
}

splat::GaussianScene LocationToScene(const Location& location) {
  if (location.layout.empty()) throw std::invalid_argument("location layout is empty");
  splat::GaussianScene scene;
  scene.bounds = WorldBounds();
  scene.background = WorldBackground();
  for (const auto& box : location.layout) EmitBox(scene.gaussians, box);
  return scene;
}

double BevBaseHeight(const CaptureConfig& capture) {
  // Height at which half the frame spans the world half-extent, plus margin.
  return 1.15 * kWorldHalfExtent * 2.0 * capture.focal_px / capture.resolution;
}

std::vector<geom::CameraPose> DroneVideoPath(const Location& location, double elevation_deg,
                                             int n_frames, const CaptureConfig& capture) {
  geom::FlightConfig flight;
  flight.elevation_deg = elevation_deg;
  flight.n_loops = capture.n_loops;
  flight.n_frames = n_frames;
  flight.radius_start = capture.radius_start;
  flight.radius_end = capture.radius_end;
  const BoxSpec& target = location.Target();
  flight.target_center =
      Eigen::Vector3d(target.center.x(), target.center.y(), 0.4 * target.size.z());
  flight.intrinsics = capture.Intrinsics();
  return geom::SpiralPath(flight);
}

Image RenderSatellite(const Location& location, const CaptureConfig& capture) {
  return splat::Render(LocationToScene(location), SatellitePose(capture));
}

std::vector<Image> RenderDroneVideo(const Location& location, double elevation_deg, int n_frames,
                                    const CaptureConfig& capture, double occlusion_fraction,
                                    uint64_t occlusion_seed) {
  const auto poses = DroneVideoPath(location, elevation_deg, n_frames, capture);
  const splat::GaussianScene scene = LocationToScene(location);
  const BoxSpec& target = location.Target();
  const Eigen::Vector3d target_point(target.center.x(), target.center.y(),
                                     0.4 * target.size.z());

  std::vector<Image> frames;
  frames.reserve(poses.size());
  for (size_t f = 0; f < poses.size(); ++f) {
    if (occlusion_fraction > 0.0) {
      std::mt19937_64 rng(MixSeed(occlusion_seed ^ location.seed, f));
      if (Uniform(rng, 0.0, 1.0) < occlusion_fraction) {
        // Distractor box on the camera-target segment.
        BoxSpec blocker;
        const double t = Uniform(rng, 0.35, 0.55);
        Eigen::Vector3d at = poses[f].position + t * (target_point - poses[f].position);
        blocker.size = Eigen::Vector3d(Uniform(rng, 1.2, 2.0), Uniform(rng, 1.2, 2.0),
                                       Uniform(rng, 1.2, 2.0));
        at.z() = std::max(at.z(), blocker.size.z() / 2.0);
        blocker.center = at;
        blocker.roof_color = Eigen::Vector3d(0.55, 0.55, 0.58);
        blocker.wall_color = Eigen::Vector3d(0.45, 0.45, 0.47);
        blocker.pattern_id = 0;
        splat::GaussianScene occluded = scene;
        EmitBox(occluded.gaussians, blocker);
        frames.push_back(splat::Render(occluded, poses[f]));
        continue;
      }
    }
    frames.push_back(splat::Render(scene, poses[f]));
  }
  return frames;
}

std::vector<Image> SynthesizeNegatives(const Location& location, View view, int m, uint64_t seed,
                                       const CaptureConfig& capture) {
  if (m < 1) throw std::invalid_argument("synthesize_negatives: m must be >= 1");
  std::vector<Image> images;
  images.reserve(m);
  for (int j = 0; j < m; ++j) {
    std::mt19937_64 rng(MixSeed(seed ^ location.seed, static_cast<uint64_t>(j) * 2 +
                                                          (view == View::kBev ? 0 : 1)));
    Location perturbed = location;
    for (auto& box : perturbed.layout) {
      if (box.is_ground) {
        box.roof_color = JitterColor(rng, box.roof_color, 0.01, 0.05, 0.05);
        continue;
      }
      box.roof_color = JitterColor(rng, box.roof_color, 0.08, 0.15, 0.12);
      box.wall_color = WallColorFor(box.roof_color);
      box.size.x() *= 1.0 + Uniform(rng, -0.15, 0.15);
      box.size.y() *= 1.0 + Uniform(rng, -0.15, 0.15);
      box.center.x() += Uniform(rng, -0.3, 0.3);
      box.center.y() += Uniform(rng, -0.3, 0.3);
      // Swap the pattern for another member of the same family.
      const int family = PatternFamily(box.pattern_id);
      const int offset = box.pattern_id - family * 3;
      box.pattern_id = kPatternFamilies[family][(offset + 1 + UniformInt(rng, 0, 1)) % 3];
    }
    const splat::GaussianScene scene = LocationToScene(perturbed);
    if (view == View::kBev) {
      const geom::CameraPose pose =
          geom::BevPose(Eigen::Vector3d::Zero(), BevBaseHeight(capture), 0.0, capture.Intrinsics());
      images.push_back(splat::Render(scene, pose));
    } else {
      images.push_back(splat::Render(scene, SatellitePose(capture)));
    }
  }
  return images;
}

std::string ElevationDirName(double elevation_deg, bool occluded) {
  std::ostringstream ss;
  ss << "drone_" << static_cast<int>(std::lround(elevation_deg));
  if (occluded) ss << "_occl";
  return ss.str();
}

std::string LocationDirName(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", id);
  return buf;
}

void DatasetManifest::Validate() const {
  for (int t : test_ids)
    for (int tr : train_ids)
      if (t == tr)
        throw std::runtime_error("manifest: train and test location ids overlap: " +
                                 std::to_string(t));
}

DatasetManifest RenderDataset(const std::vector<Location>& train_locations,
                              const std::vector<Location>& test_locations,
                              const DatasetOptions& options) {
  if (options.fps != 2 && options.fps != 5 && options.fps != 10)
    throw std::invalid_argument("fps must be one of 2, 5, 10");
  const int n_frames = static_cast<int>(std::lround(options.fps * options.video_seconds));
  if (n_frames < options.capture.n_loops)
    throw std::invalid_argument("video too short for the spiral loop count");

  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create dataset directory: " + options.out_dir.string());

  DatasetManifest manifest;
  manifest.seed = options.seed;
  manifest.fps = options.fps;
  manifest.video_seconds = options.video_seconds;
  manifest.frames_per_video = n_frames;
  manifest.elevations = options.elevations;
  manifest.resolution = options.capture.resolution;
  manifest.negatives_per_view = options.negatives_per_view;
  manifest.occlusion_fraction = options.occlusion_fraction;
  for (const auto& l : train_locations) manifest.train_ids.push_back(l.id);
  for (const auto& l : test_locations) manifest.test_ids.push_back(l.id);
  manifest.Validate();

  const auto render_split = [&](const std::vector<Location>& locations, const std::string& split,
                                bool is_train) {
    for (const auto& loc : locations) {
      const std::string loc_dir = LocationDirName(loc.id);
      for (double elev : options.elevations) {
        const auto dir = options.out_dir / split / ElevationDirName(elev) / loc_dir;
        std::filesystem::create_directories(dir);
        const auto frames = RenderDroneVideo(loc, elev, n_frames, options.capture);
        for (size_t f = 0; f < frames.size(); ++f) {
          char name[32];
          std::snprintf(name, sizeof(name), "frame_%03zu.png", f);
          WritePng(dir / name, frames[f]);
        }
        if (!is_train && options.occlusion_fraction > 0.0) {
          const auto odir = options.out_dir / split / ElevationDirName(elev, true) / loc_dir;
          std::filesystem::create_directories(odir);
          const auto occl = RenderDroneVideo(loc, elev, n_frames, options.capture,
                                             options.occlusion_fraction, options.seed);
          for (size_t f = 0; f < occl.size(); ++f) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%03zu.png", f);
            WritePng(odir / name, occl[f]);
          }
        }
      }
      const auto sat_dir = options.out_dir / split / "satellite" / loc_dir;
      std::filesystem::create_directories(sat_dir);
      WritePng(sat_dir / "satellite.png", RenderSatellite(loc, options.capture));

      if (is_train && options.negatives_per_view > 0) {
        const auto neg_bev = SynthesizeNegatives(loc, View::kBev, options.negatives_per_view,
                                                 options.seed, options.capture);
        const auto neg_sat = SynthesizeNegatives(loc, View::kSatellite,
                                                 options.negatives_per_view, options.seed,
                                                 options.capture);
        const auto bev_dir = options.out_dir / split / "synth_bev" / loc_dir;
        const auto sat_neg_dir = options.out_dir / split / "synth_satellite" / loc_dir;
        std::filesystem::create_directories(bev_dir);
        std::filesystem::create_directories(sat_neg_dir);
        for (int j = 0; j < options.negatives_per_view; ++j) {
          char name[32];
          std::snprintf(name, sizeof(name), "neg_%02d.png", j);
          WritePng(bev_dir / name, neg_bev[j]);
          WritePng(sat_neg_dir / name, neg_sat[j]);
        }
      }
    }
  };

  render_split(train_locations, "train", true);
  render_split(test_locations, "test", false);
  WriteManifest(options.out_dir / "manifest.json", manifest);
  return manifest;
}

void WriteManifest(const std::filesystem::path& path, const DatasetManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["seed"] = m.seed;
  j["fps"] = m.fps;
  j["video_seconds"] = m.video_seconds;
  j["frames_per_video"] = m.frames_per_video;
  j["elevations"] = m.elevations;
  j["resolution"] = m.resolution;
  j["splits"] = {{"train", {{"ids", m.train_ids}}}, {"test", {{"ids", m.test_ids}}}};
  j["synthetic_negatives"] = {{"per_view", m.negatives_per_view},
                              {"views", {"bev", "satellite"}},
                              {"split", "train"},
                              {"synthetic", true}};
  j["occlusion"] = {{"fraction", m.occlusion_fraction}, {"split", "test"}};
  j["paths"] = {{"drone", "{split}/drone_{elevation}/{id}/frame_{frame}.png"},
                {"satellite", "{split}/satellite/{id}/satellite.png"},
                {"synth", "train/synth_{view}/{id}/neg_{index}.png"},
                {"occluded", "test/drone_{elevation}_occl/{id}/frame_{frame}.png"}};
  WriteTextFile(path, j.dump(2) + "\n");
}

DatasetManifest ReadManifest(const std::filesystem::path& path) {
  const json j = json::parse(ReadTextFile(path));
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  m.fps = j.at("fps").get<int>();
  m.video_seconds = j.at("video_seconds").get<double>();
  m.frames_per_video = j.at("frames_per_video").get<int>();
  m.elevations = j.at("elevations").get<std::vector<double>>();
  m.resolution = j.at("resolution").get<int>();
  m.train_ids = j.at("splits").at("train").at("ids").get<std::vector<int>>();
  m.test_ids = j.at("splits").at("test").at("ids").get<std::vector<int>>();
  m.negatives_per_view = j.at("synthetic_negatives").at("per_view").get<int>();
  m.occlusion_fraction = j.at("occlusion").at("fraction").get<double>();
  m.Validate();
  return m;
}

}  // namespace bevloc::synth
