#include "npmesh/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace npmesh {

namespace fs = std::filesystem;

std::vector<ManifestEntry> DatasetManifest::split(const std::string& tag) const {
  std::vector<ManifestEntry> out;
  for (const ManifestEntry& e : entries)
    if (e.split == tag) out.push_back(e);
  return out;
}

DatasetManifest build_manifest(const std::string& directory, uint64_t seed,
                               int seeds_per_mesh) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(directory))
    if (entry.is_regular_file() && entry.path().extension() == ".obj")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw TrainError("no OBJ files in " + directory);

  DatasetManifest manifest;
  std::vector<std::string> kept;
  for (const std::string& f : files) {
    try {
      if (!validate(load_obj(f).mesh).ok()) throw MeshError("validation failed");
      kept.push_back(f);
    } catch (const std::exception& e) {
      ++manifest.excluded_count;
      std::cerr << "manifest: excluding " << f << ": " << e.what() << "\n";
    }
  }
  if (kept.empty()) throw TrainError("no valid meshes in " + directory);

  std::stable_sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
    uint64_t ha = fnv1a(fs::path(a).filename().string(), 0xcbf29ce484222325ull ^ seed);
    uint64_t hb = fnv1a(fs::path(b).filename().string(), 0xcbf29ce484222325ull ^ seed);
    if (ha != hb) return ha < hb;
    return a < b;
  });

  const int n = static_cast<int>(kept.size());
  const int n_train = n * 8 / 10;
  const int n_val = (n - n_train) / 2;
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.path = kept[i];
    e.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    Rng rng(fnv1a(fs::path(kept[i]).filename().string(), 0x9e3779b97f4a7c15ull ^ seed));
    for (int j = 0; j < seeds_per_mesh; ++j) e.seeds.push_back(rng.next_u64());
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw TrainError("cannot write " + path);
  for (const ManifestEntry& e : manifest.entries) {
    nlohmann::json j;
    j["path"] = e.path;
    j["split"] = e.split;
    j["seeds"] = e.seeds;
    out << j.dump() << "\n";
  }
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot open manifest " + path);
  DatasetManifest manifest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw TrainError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    e.path = j.at("path").get<std::string>();
    e.split = j.at("split").get<std::string>();
    e.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.entries.empty()) throw TrainError("empty manifest " + path);
  return manifest;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(std::string("config parse: ") + e.what());
  }
  TrainConfig cfg;
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.coarse_faces = j.value("coarse_faces", cfg.coarse_faces);
  cfg.levels = j.value("levels", cfg.levels);
  cfg.jitter = j.value("jitter", cfg.jitter);
  cfg.augment = j.value("augment", cfg.augment);
  cfg.corr_frobenius = j.value("corr_frobenius", cfg.corr_frobenius);
  cfg.grad_accum = j.value("grad_accum", cfg.grad_accum);
  cfg.decimations_per_mesh = j.value("decimations_per_mesh", cfg.decimations_per_mesh);
  cfg.max_steps = j.value("max_steps", cfg.max_steps);
  if (cfg.alpha < 0 || cfg.beta < 0 || cfg.lr <= 0)
    throw TrainError("config: alpha/beta must be >= 0 and lr > 0");
  return cfg;
}

std::string train_config_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["coarse_faces"] = cfg.coarse_faces;
  j["levels"] = cfg.levels;
  j["jitter"] = cfg.jitter;
  j["augment"] = cfg.augment;
  j["corr_frobenius"] = cfg.corr_frobenius;
  j["grad_accum"] = cfg.grad_accum;
  j["decimations_per_mesh"] = cfg.decimations_per_mesh;
  j["max_steps"] = cfg.max_steps;
  return j.dump(1);
}

std::vector<TrainSample> build_training_set(const DatasetManifest& manifest,
                                            const std::string& tag, const TrainConfig& cfg) {
  std::vector<TrainSample> out;
  for (const ManifestEntry& e : manifest.split(tag)) {
    HalfEdgeMesh mesh = normalize_to_unit_cube(load_obj(e.path).mesh).first;
    const int reps = std::min<int>(cfg.decimations_per_mesh, static_cast<int>(e.seeds.size()));
    for (int j = 0; j < reps; ++j) {
      TrainSample s;
      s.name = fs::path(e.path).filename().string() + "#" + std::to_string(j);
      s.hierarchy = build_hierarchy(mesh, cfg.coarse_faces, cfg.levels, e.seeds[j], cfg.jitter);
      out.push_back(std::move(s));
    }
  }
  return out;
}

namespace {

LossBreakdown forward_backward(ParamStore& params, const LodHierarchy& h,
                               const TrainConfig& cfg, bool with_grad, bool train_mode) {
  Tape tape;
  ModelContext ctx(tape, params, train_mode, train_mode && with_grad);
  ForwardResult fwd = network_forward(ctx, h);
  LossTensors losses = compute_losses(tape, fwd, h, cfg.alpha, cfg.beta, cfg.corr_frobenius);
  if (with_grad) {
    tape.backward(losses.total);
    ctx.accumulate_grads();
  }
  return losses.values(cfg.alpha, cfg.beta);
}

} // namespace

LossBreakdown train_step(ParamStore& params, const LodHierarchy& h, const TrainConfig& cfg) {
  params.zero_grad();
  LossBreakdown b = forward_backward(params, h, cfg, true, true);
  adam_step(params, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
  return b;
}

double validation_loss(ParamStore& params, const std::vector<TrainSample>& val_set,
                       const TrainConfig& cfg) {
  double total = 0;
  for (const TrainSample& s : val_set)
    total += forward_backward(params, s.hierarchy, cfg, false, false).total;
  return total / static_cast<double>(val_set.size());
}

TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                  ParamStore& params, const std::string& log_csv_path,
                  const std::string& best_checkpoint_path,
                  const std::string& last_checkpoint_path) {
  if (train_set.empty()) throw TrainError("empty training set");
  if (cfg.grad_accum != 1 && params.step_count() != 0)
    throw TrainError("resume is only supported with grad_accum = 1");

  const int64_t n = static_cast<int64_t>(train_set.size());
  const int64_t start_step = params.step_count();
  int64_t limit = static_cast<int64_t>(cfg.epochs) * n;
  if (cfg.max_steps >= 0) limit = std::min<int64_t>(limit, cfg.max_steps);

  std::ofstream log(log_csv_path, start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw TrainError("cannot write " + log_csv_path);
  if (start_step == 0) log << "step,corr,jacobian,sparsity,total,val_total\n";

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  char buf[256];

  int64_t step = 0;
  int accumulated = 0;
  for (int64_t epoch = 0; epoch * n < limit; ++epoch) {
    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(fnv1a("epoch:" + std::to_string(epoch), cfg.seed));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

    for (int64_t pos = 0; pos < n && step < limit; ++pos, ++step) {
      if (step < start_step) continue; // fast-forward for exact resume
      const TrainSample& sample = train_set[order[pos]];
      const LodHierarchy* h = &sample.hierarchy;
      LodHierarchy rotated;
      if (cfg.augment) {
        rotated = augment(sample.hierarchy, fnv1a("aug:" + std::to_string(step), cfg.seed));
        h = &rotated;
      }

      if (accumulated == 0) params.zero_grad();
      LossBreakdown b = forward_backward(params, *h, cfg, true, true);
      if (!std::isfinite(b.total))
        throw TrainError("non-finite loss at step " + std::to_string(step) + " on " +
                         sample.name);
      if (++accumulated == cfg.grad_accum) {
        adam_step(params, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
        accumulated = 0;
      }
      result.final_train_loss = b.total;

      std::string val_field;
      if (pos == n - 1 || step == limit - 1) {
        double val = val_set.empty() ? b.total : validation_loss(params, val_set, cfg);
        std::snprintf(buf, sizeof(buf), "%.17g", val);
        val_field = buf;
        if (val < result.best_val_loss) {
          result.best_val_loss = val;
          if (!best_checkpoint_path.empty()) save_checkpoint(params, best_checkpoint_path);
        }
      }
      std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,",
                    static_cast<long long>(step), b.corr, b.jacobian, b.sparsity, b.total);
      log << buf << val_field << "\n";
    }
  }
  log.flush();
  if (!last_checkpoint_path.empty()) save_checkpoint(params, last_checkpoint_path);
  result.steps = step;
  return result;
}

GradCheckReport full_pipeline_gradcheck(uint64_t seed, int samples_per_param) {
  MatX3d V(6, 3);
  V << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  MatX3i F(8, 3);
  F << 0, 2, 4, 2, 1, 4, 1, 3, 4, 3, 0, 4, 2, 0, 5, 1, 2, 5, 3, 1, 5, 0, 3, 5;
  HalfEdgeMesh octa(V, F);
  LodHierarchy h = build_hierarchy(octa, 8, 2, 0, 0.0);

  ParamStore params = init_model(2, seed);
  // nudge the displacement layers off their zero init so their gradients are
  // exercised away from the symmetric point
  Rng rng(seed ^ 0x5bf03635u);
  for (auto& [name, p] : params.params())
    if (p.trainable && name.find(".disp.") != std::string::npos)
      for (long i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = rng.uniform(-0.01, 0.01);

  auto f = [&h](ParamStore& store, bool with_grad) {
    Tape tape;
    ModelContext ctx(tape, store, true, false);
    ForwardResult fwd = network_forward(ctx, h);
    LossTensors losses = compute_losses(tape, fwd, h, 1.0, 0.1);
    if (with_grad) {
      tape.backward(losses.total);
      ctx.accumulate_grads();
    }
    return losses.total.value()(0, 0);
  };
  return grad_check(params, f, samples_per_param, seed, 1e-6);
}

} // namespace npmesh
