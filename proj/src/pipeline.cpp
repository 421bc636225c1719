#include "bevloc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <future>
#include <stdexcept>
#include <thread>

#include "bevloc/util.hpp"

namespace bevloc::pipeline {

namespace {

synth::DatasetOptions MakeDatasetOptions(const ExperimentConfig& config, const Paths& paths) {
  synth::DatasetOptions options;
  options.out_dir = paths.Data();
  options.fps = config.dataset.fps;
  options.video_seconds = config.dataset.video_seconds;
  options.elevations = config.dataset.elevations;
  options.negatives_per_view = config.dataset.negatives_per_view;
  options.occlusion_fraction = config.dataset.occlusion_fraction;
  options.seed = config.seed;
  options.capture.resolution = config.dataset.resolution;
  options.capture.focal_px = static_cast<double>(config.dataset.resolution);
  return options;
}

std::vector<Image> LoadFrameDir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(ReadPng(f));
  return frames;
}

std::vector<int> SplitIds(const synth::DatasetManifest& manifest, const std::string& split) {
  if (split == "train") return manifest.train_ids;
  if (split == "test") return manifest.test_ids;
  throw std::invalid_argument("unknown split: " + split);
}

splat::FitConfig MakeFitConfig(const ExperimentConfig& config, int location_id) {
  splat::FitConfig fit;
  fit.n_gaussians = config.fit.n_gaussians;
  fit.iters = config.fit.iters;
  fit.step_size = config.fit.step_size;
  fit.seed = MixSeed(config.seed, 0x0f17 + static_cast<uint64_t>(location_id));
  return fit;
}

splat::BevConfig MakeBevConfig(const ExperimentConfig& config) {
  splat::BevConfig bev;
  bev.intrinsics = geom::Intrinsics::Square(config.dataset.resolution,
                                            static_cast<double>(config.dataset.resolution));
  bev.base_height = config.bev.base_height;
  bev.height_growth = config.bev.height_growth;
  bev.yaw_step_deg = config.bev.yaw_step_deg;
  bev.crop_fraction_train = config.bev.crop_train;
  bev.crop_fraction_test = config.bev.crop_test;
  return bev;
}

model::EncoderConfig MakeEncoderConfig(const ExperimentConfig& config) {
  model::EncoderConfig enc;
  enc.input_resolution = config.dataset.resolution;
  enc.n_rings = config.model.n_rings;
  enc.channels1 = config.model.channels1;
  enc.channels2 = config.model.channels2;
  enc.out_channels = config.model.out_channels;
  return enc;
}

}  // namespace

synth::DatasetManifest GenData(const ExperimentConfig& config, const Paths& paths) {
  if (config.dataset.n_train <= 0 || config.dataset.n_train >= config.dataset.n_locations)
    throw std::invalid_argument("gen-data: n_train must split the locations into two nonempty sets");
  const auto locations = synth::MakeLocations(config.seed, config.dataset.n_locations);
  const std::vector<synth::Location> train(locations.begin(),
                                           locations.begin() + config.dataset.n_train);
  const std::vector<synth::Location> test(locations.begin() + config.dataset.n_train,
                                          locations.end());
  return synth::RenderDataset(train, test, MakeDatasetOptions(config, paths));
}

void Reconstruct(const ExperimentConfig& config, const Paths& paths, const std::string& split) {
  const auto manifest = synth::ReadManifest(paths.Manifest());
  const auto ids = SplitIds(manifest, split);
  const geom::BevMode mode = split == "train" ? geom::BevMode::kTrain : geom::BevMode::kTest;
  const std::string elev_dir = synth::ElevationDirName(config.elevation);
  const auto bev_root = paths.Bev(split);

  const auto process = [&](int id) {
    const auto frames = LoadFrameDir(paths.Data() / split / elev_dir / synth::LocationDirName(id));
    if (frames.empty())
      throw std::runtime_error("reconstruct: no frames for location " + std::to_string(id));
    // Poses are known for synthetic data: regenerate the flight deterministically.
    synth::CaptureConfig capture;
    capture.resolution = config.dataset.resolution;
    capture.focal_px = static_cast<double>(config.dataset.resolution);
    const auto location = synth::GenerateLocation(manifest.seed, id);
    const auto poses =
        synth::DroneVideoPath(location, config.elevation, static_cast<int>(frames.size()), capture);

    splat::FitResult fit;
    const auto seq = splat::VideoToBev(frames, poses, MakeFitConfig(config, id),
                                       MakeBevConfig(config), mode, &fit);

    const auto out_dir = bev_root / elev_dir / synth::LocationDirName(id);
    std::filesystem::create_directories(out_dir);
    for (size_t f = 0; f < seq.frames.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%03zu.png", f);
      WritePng(out_dir / name, seq.frames[f]);
    }
    geom::WritePoseTable(out_dir / "bev_poses.txt", seq.poses);
    splat::WriteSceneFile(out_dir / "scene.txt", fit.scene);
  };

  // Locations are independent; run a small worker pool over them.
  const unsigned n_workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<void>> futures;
  std::atomic<size_t> next{0};
  for (unsigned w = 0; w < std::min<unsigned>(n_workers, ids.size()); ++w) {
    futures.push_back(std::async(std::launch::async, [&]() {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= ids.size()) return;
        process(ids[i]);
      }
    }));
  }
  for (auto& f : futures) f.get();
}

train::TrainData LoadTrainData(const ExperimentConfig& config, const Paths& paths) {
  const auto manifest = synth::ReadManifest(paths.Manifest());
  const std::string elev_dir = synth::ElevationDirName(config.elevation);
  train::TrainData data;
  for (int id : manifest.train_ids) {
    train::LocationData loc;
    loc.id = id;
    const std::string loc_dir = synth::LocationDirName(id);
    const auto bev_dir = paths.Bev("train") / elev_dir / loc_dir;
    if (std::filesystem::exists(bev_dir)) loc.bev_frames = LoadFrameDir(bev_dir);
    loc.drone_frames = LoadFrameDir(paths.Data() / "train" / elev_dir / loc_dir);
    loc.satellite = ReadPng(paths.Data() / "train" / "satellite" / loc_dir / "satellite.png");
    const auto synth_bev_dir = paths.Data() / "train" / "synth_bev" / loc_dir;
    if (std::filesystem::exists(synth_bev_dir)) loc.synth_bev = LoadFrameDir(synth_bev_dir);
    const auto synth_sat_dir = paths.Data() / "train" / "synth_satellite" / loc_dir;
    if (std::filesystem::exists(synth_sat_dir))
      loc.synth_satellite = LoadFrameDir(synth_sat_dir);
    data.locations.push_back(std::move(loc));
  }
  return data;
}

namespace {

std::vector<eval::EvalItem> LoadVideoItems(const ExperimentConfig& config, const Paths& paths,
                                           EvalInput input, const std::vector<int>& ids) {
  const bool occluded = input == EvalInput::kDroneOccluded;
  const std::string elev_dir = synth::ElevationDirName(config.elevation, occluded);
  std::vector<eval::EvalItem> items;
  for (int id : ids) {
    eval::EvalItem item;
    item.id = id;
    const std::string loc_dir = synth::LocationDirName(id);
    item.frames = input == EvalInput::kBev
                      ? LoadFrameDir(paths.Bev("test") / synth::ElevationDirName(config.elevation) /
                                     loc_dir)
                      : LoadFrameDir(paths.Data() / "test" / elev_dir / loc_dir);
    if (item.frames.empty())
      throw std::runtime_error("eval: no frames for test location " + std::to_string(id));
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<eval::EvalItem> LoadSatelliteItems(const Paths& paths, const std::vector<int>& ids) {
  std::vector<eval::EvalItem> items;
  for (int id : ids) {
    eval::EvalItem item;
    item.id = id;
    item.frames.push_back(
        ReadPng(paths.Data() / "test" / "satellite" / synth::LocationDirName(id) / "satellite.png"));
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<eval::EvalItem> ExpandSingleFrames(const std::vector<eval::EvalItem>& items) {
  std::vector<eval::EvalItem> out;
  for (const auto& item : items)
    for (const auto& frame : item.frames) out.push_back({item.id, {frame}});
  return out;
}

}  // namespace

eval::RetrievalRun RunEval(const ExperimentConfig& config, const Paths& paths,
                           const model::Stage1Model& stage1, const model::MatchHead* match_head,
                           const EvalSpec& spec) {
  const auto manifest = synth::ReadManifest(paths.Manifest());
  const auto ids = manifest.test_ids;

  std::vector<eval::EvalItem> videos = LoadVideoItems(config, paths, spec.input, ids);
  std::vector<eval::EvalItem> satellites = LoadSatelliteItems(paths, ids);

  std::vector<eval::EvalItem> queries, gallery;
  if (spec.direction == "drone_to_satellite") {
    queries = std::move(videos);
    gallery = std::move(satellites);
  } else if (spec.direction == "satellite_to_drone") {
    queries = std::move(satellites);
    gallery = std::move(videos);
  } else {
    throw std::invalid_argument("unknown direction: " + spec.direction);
  }
  if (spec.query_mode == QueryMode::kSingleFrame) queries = ExpandSingleFrames(queries);

  return eval::Evaluate(queries, gallery, stage1, spec.use_stage2 ? match_head : nullptr,
                        spec.topk, spec.direction);
}

model::Stage1Model RunTrainStage1(const ExperimentConfig& config, const Paths& paths,
                                  train::Stage1Input input,
                                  const std::filesystem::path& checkpoint_path) {
  const auto data = LoadTrainData(config, paths);
  train::Stage1Config sc;
  sc.batch_size = config.stage1.batch;
  sc.epochs = config.stage1.epochs;
  sc.lr_encoder = config.stage1.lr_encoder;
  sc.lr_other = config.stage1.lr_other;
  sc.tau_init = config.stage1.tau_init;
  sc.weight_decay = config.stage1.weight_decay;
  sc.seed = config.seed;
  sc.input = input;
  sc.encoder = MakeEncoderConfig(config);
  sc.log_path = paths.Logs() / "stage1.log";
  model::Stage1Model model = train::TrainStage1(data, sc);
  model::SaveStage1Checkpoint(checkpoint_path, model);
  return model;
}

void RunTrainStage2(const ExperimentConfig& config, const Paths& paths,
                    const std::filesystem::path& stage1_path, train::Stage2Strategy strategy,
                    train::NegativeSource negatives, train::Stage1Input input,
                    const std::filesystem::path& out_path) {
  const auto data = LoadTrainData(config, paths);
  model::Stage1Model stage1 =
      strategy == train::Stage2Strategy::kTrainTogether
          ? model::Stage1Model(MakeEncoderConfig(config),
                               static_cast<int>(data.locations.size()), config.stage1.tau_init,
                               config.seed)
          : model::LoadStage1Checkpoint(stage1_path);
  if (strategy == train::Stage2Strategy::kTrainTogether) {
    std::vector<int> ids;
    for (const auto& loc : data.locations) ids.push_back(loc.id);
    std::sort(ids.begin(), ids.end());
    stage1.category_ids = ids;
  }

  train::Stage2Config sc;
  sc.batch_size = config.stage2.batch;
  sc.epochs = config.stage2.epochs;
  sc.lr = config.stage2.lr;
  sc.lr_stage1_encoder = config.stage2.lr_stage1_encoder;
  sc.lr_stage1_other = config.stage2.lr_stage1_other;
  sc.k_negatives = config.stage2.k_negatives;
  sc.weight_decay = config.stage2.weight_decay;
  sc.seed = config.seed;
  sc.input = input;
  sc.log_path = paths.Logs() / "stage2.log";
  model::Stage2Model stage2 = train::TrainStage2(data, stage1, strategy, sc);
  model::SaveCombinedCheckpoint(out_path, stage1, stage2);
}

}  // namespace bevloc::pipeline
