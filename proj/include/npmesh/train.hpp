#pragma once

#include "npmesh/loss.hpp"
#include "npmesh/network.hpp"

#include <string>
#include <vector>

namespace npmesh {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string path;
  std::string split; // train | val | test
  std::vector<uint64_t> seeds;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int excluded_count = 0; // meshes dropped for failing validation

  std::vector<ManifestEntry> split(const std::string& tag) const;
};

// Deterministic hash split over the OBJ files of a directory: 0.8/0.1/0.1 by
// fnv1a(filename, seed) order. Meshes failing validate are excluded and
// counted. Each entry carries seeds_per_mesh decimation seeds.
DatasetManifest build_manifest(const std::string& directory, uint64_t seed,
                               int seeds_per_mesh = 10);

// JSON lines, one {path, split, seeds} object per entry.
void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

struct TrainConfig {
  double alpha = 1.0;
  double beta = 0.1;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int epochs = 1;
  uint64_t seed = 0;
  int coarse_faces = 400;
  int levels = 3;
  double jitter = 0.1;
  bool augment = true;
  bool corr_frobenius = false;
  int grad_accum = 1;
  int decimations_per_mesh = 1; // how many manifest seeds to expand
  int max_steps = -1;           // cap on optimizer steps; -1 = epochs only
};

TrainConfig load_train_config(const std::string& path);
std::string train_config_json(const TrainConfig& cfg);

struct TrainSample {
  std::string name;
  LodHierarchy hierarchy;
};

// Loads, normalizes, and remeshes the manifest entries of one split.
std::vector<TrainSample> build_training_set(const DatasetManifest& manifest,
                                            const std::string& tag, const TrainConfig& cfg);

struct TrainResult {
  int64_t steps = 0;
  double final_train_loss = 0;
  double best_val_loss = 0;
};

// Batch = one hierarchy, shuffled per epoch from the run seed. Per-step RNG
// is derived from (seed, step), so resuming from a checkpoint reproduces the
// unresumed run bitwise. Writes step,corr,jacobian,sparsity,total,val_total
// rows to log_csv_path (val_total filled on epoch boundaries) and keeps the
// best-validation checkpoint. Aborts with the offending mesh on NaN loss.
TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                  ParamStore& params, const std::string& log_csv_path,
                  const std::string& best_checkpoint_path,
                  const std::string& last_checkpoint_path);

// One forward/backward/step on a single hierarchy; returns the breakdown.
LossBreakdown train_step(ParamStore& params, const LodHierarchy& h, const TrainConfig& cfg);

double validation_loss(ParamStore& params, const std::vector<TrainSample>& val_set,
                       const TrainConfig& cfg);

// Finite-difference check of the full encoder/decoder/loss pipeline on a tiny
// built-in hierarchy (octahedron base, two levels).
GradCheckReport full_pipeline_gradcheck(uint64_t seed = 7, int samples_per_param = 2);

} // namespace npmesh
