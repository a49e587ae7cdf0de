#include "npmesh/codec.hpp"
#include "npmesh/metrics.hpp"
#include "npmesh/subdiv.hpp"
#include "npmesh/train.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace npmesh;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumerical = 4;

int default_threads() {
  if (const char* env = std::getenv("NPM_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// Ranked records for a hierarchy under a trained model.
std::vector<FeatureRecord> rank_hierarchy(const LodHierarchy& h, ParamStore& params,
                                          const std::string& ranking) {
  Tape tape;
  ModelContext ctx(tape, params, false, false);
  std::vector<Tensor> learned_t = encoder_forward(ctx, h);
  std::vector<Eigen::MatrixXd> learned;
  for (const Tensor& t : learned_t) learned.push_back(t.value());
  if (ranking == "loss") return rank_features_by_loss(h, params, learned);
  return rank_features_magnitude(learned);
}

LodHierarchy load_or_build_hierarchy(const std::string& input, int coarse_faces, int levels,
                                     uint64_t seed, double jitter) {
  if (fs::is_directory(input)) return load_hierarchy_cache(input);
  HalfEdgeMesh mesh = normalize_to_unit_cube(load_obj(input).mesh).first;
  return build_hierarchy(mesh, coarse_faces, levels, seed, jitter);
}

int cmd_remesh(const std::string& input, const std::string& out, int coarse_faces, int levels,
               uint64_t seed, double jitter) {
  ObjLoadResult loaded = load_obj(input);
  ValidationReport report = validate(loaded.mesh);
  if (!report.ok()) {
    std::cerr << "validation failed for " << input << ": edge_manifold="
              << report.is_edge_manifold << " watertight=" << report.is_watertight
              << " components=" << report.connected_component_count
              << " degenerate_faces=" << report.degenerate_face_count << "\n";
    return kExitInput;
  }
  HalfEdgeMesh mesh = normalize_to_unit_cube(loaded.mesh).first;
  LodHierarchy h = build_hierarchy(mesh, coarse_faces, levels, seed, jitter);
  fs::create_directories(out);
  save_hierarchy_cache(h, out);
  std::cout << "hierarchy: " << levels + 1 << " levels, coarse faces "
            << h.level_mesh(0).num_faces() << ", finest faces "
            << h.level_mesh(levels).num_faces() << "\n";
  return kExitOk;
}

int cmd_train(const std::string& manifest_path, const std::string& config_path,
              const std::string& out, const std::string& resume) {
  DatasetManifest manifest = load_manifest(manifest_path);
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
  fs::create_directories(out);

  std::vector<TrainSample> train_set = build_training_set(manifest, "train", cfg);
  std::vector<TrainSample> val_set = build_training_set(manifest, "val", cfg);

  ParamStore params =
      resume.empty() ? init_model(cfg.levels, cfg.seed) : load_checkpoint(resume);
  if (model_levels(params) != cfg.levels) {
    std::cerr << "checkpoint level count does not match config\n";
    return kExitInput;
  }

  TrainResult result =
      train(train_set, val_set, cfg, params, out + "/loss.csv", out + "/best.npmw",
            out + "/last.npmw");
  std::cout << "trained " << result.steps << " steps, final loss "
            << result.final_train_loss << ", best val " << result.best_val_loss << "\n";
  return kExitOk;
}

int cmd_encode(const std::string& model, const std::string& input, size_t k,
               const std::string& ranking, const std::string& out, int coarse_faces,
               int levels, uint64_t seed, double jitter) {
  ParamStore params = load_checkpoint(model);
  LodHierarchy h = load_or_build_hierarchy(input, coarse_faces, levels, seed, jitter);
  if (model_levels(params) != h.L) {
    std::cerr << "model level count does not match the hierarchy\n";
    return kExitInput;
  }
  std::vector<FeatureRecord> ranked = rank_hierarchy(h, params, ranking);
  if (k > ranked.size()) {
    std::cerr << "k exceeds the total feature count " << ranked.size() << "\n";
    return kExitInput;
  }
  write_binary_file(out, encode_stream(h.level_mesh(0), h.L, ranked, k));
  std::cout << "wrote " << out << " with " << k << " of " << ranked.size() << " records\n";
  return kExitOk;
}

int cmd_decode(const std::string& model, const std::string& stream, size_t prefix_bytes,
               int level, const std::string& out) {
  ParamStore params = load_checkpoint(model);
  std::vector<uint8_t> bytes = read_binary_file(stream);
  HalfEdgeMesh mesh = decode_stream(bytes, params, prefix_bytes, level);
  save_obj(mesh, out);
  std::cout << "decoded level " << level << ": " << mesh.num_vertices() << " vertices, "
            << mesh.num_faces() << " faces\n";
  return kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& stream, int samples, uint64_t seed, int threads,
             const std::string& out) {
  HalfEdgeMesh pred = load_obj(pred_path).mesh;
  HalfEdgeMesh gt = load_obj(gt_path).mesh;
  std::optional<double> cr;
  if (!stream.empty()) {
    DecodedStream s = parse_stream(read_binary_file(stream));
    cr = compression_ratio(gt.num_vertices(), s.header.num_coarse_vertices,
                           s.records.size());
  }
  MetricsReport report = evaluate(pred, gt, cr, samples, seed, threads);
  std::string json = report.to_json();
  if (out.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream f(out);
    f << json << "\n";
  }
  return kExitOk;
}

int cmd_bench(const std::string& manifest_path, const std::string& model,
              const std::vector<std::string>& methods, const std::vector<size_t>& budgets,
              const std::string& out, int samples, uint64_t seed, int threads,
              int coarse_faces, int levels) {
  DatasetManifest manifest = load_manifest(manifest_path);
  ParamStore params = load_checkpoint(model);
  std::vector<BenchmarkInput> inputs;
  for (const ManifestEntry& e : manifest.split("test")) {
    BenchmarkInput in;
    in.name = fs::path(e.path).filename().string();
    in.original = normalize_to_unit_cube(load_obj(e.path).mesh).first;
    in.hierarchy = build_hierarchy(in.original, coarse_faces, levels,
                                   e.seeds.empty() ? 0 : e.seeds[0], 0.0);
    inputs.push_back(std::move(in));
  }
  if (inputs.empty()) {
    std::cerr << "manifest has no test split\n";
    return kExitInput;
  }
  std::vector<BenchmarkRow> rows =
      run_benchmark(inputs, params, methods, budgets, samples, seed, threads);
  std::ofstream f(out);
  if (!f) {
    std::cerr << "cannot write " << out << "\n";
    return kExitInput;
  }
  f << benchmark_csv(rows);
  std::cout << "wrote " << rows.size() << " rows to " << out << "\n";
  return kExitOk;
}

int cmd_gradcheck(uint64_t seed, int samples) {
  GradCheckReport report = full_pipeline_gradcheck(seed, samples);
  bool pass = report.max_rel_err < 1e-4;
  std::cout << (pass ? "PASS" : "FAIL") << " max_rel_err=" << report.max_rel_err
            << " coords=" << report.coords_checked << " worst=" << report.worst_param << "\n";
  return pass ? kExitOk : kExitNumerical;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"progressive neural mesh codec"};
  app.require_subcommand(1);

  int threads = default_threads();
  app.add_option("--threads", threads, "worker threads (env NPM_THREADS)");

  std::string input, out, model, stream, manifest, config, resume, pred, gt;
  std::string ranking = "magnitude";
  int coarse_faces = 400, levels = 3, level = 3, samples = 1000000, gc_samples = 2;
  uint64_t seed = 0;
  double jitter = 0.0;
  size_t k = 0, prefix_bytes = SIZE_MAX;
  std::vector<std::string> methods = {"qslim", "midpoint", "loop", "butterfly", "neural"};
  std::vector<size_t> budgets = {0, 40, 400};

  auto* remesh = app.add_subcommand("remesh", "build an LoD hierarchy cache");
  remesh->add_option("--input", input)->required();
  remesh->add_option("--out", out)->required();
  remesh->add_option("--coarse-faces", coarse_faces);
  remesh->add_option("--levels", levels);
  remesh->add_option("--seed", seed);
  remesh->add_option("--jitter", jitter);

  auto* train_cmd = app.add_subcommand("train", "train from a dataset manifest");
  train_cmd->add_option("--manifest", manifest)->required();
  train_cmd->add_option("--config", config);
  train_cmd->add_option("--out", out)->required();
  train_cmd->add_option("--resume", resume);

  auto* encode = app.add_subcommand("encode", "encode a progressive stream");
  encode->add_option("--model", model)->required();
  encode->add_option("--input", input, "OBJ file or hierarchy cache directory")->required();
  encode->add_option("--features", k);
  encode->add_option("--ranking", ranking)->check(CLI::IsMember({"magnitude", "loss"}));
  encode->add_option("--out", out)->required();
  encode->add_option("--coarse-faces", coarse_faces);
  encode->add_option("--levels", levels);
  encode->add_option("--seed", seed);
  encode->add_option("--jitter", jitter);

  auto* decode = app.add_subcommand("decode", "decode a stream prefix to OBJ");
  decode->add_option("--model", model)->required();
  decode->add_option("--stream", stream)->required();
  decode->add_option("--prefix-bytes", prefix_bytes);
  decode->add_option("--level", level);
  decode->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "compute reconstruction metrics");
  eval->add_option("--pred", pred)->required();
  eval->add_option("--gt", gt)->required();
  eval->add_option("--stream", stream);
  eval->add_option("--samples", samples);
  eval->add_option("--seed", seed);
  eval->add_option("--out", out);

  auto* bench = app.add_subcommand("bench", "rate-distortion benchmark CSV");
  bench->add_option("--manifest", manifest)->required();
  bench->add_option("--model", model)->required();
  bench->add_option("--methods", methods)->delimiter(',');
  bench->add_option("--budgets", budgets)->delimiter(',');
  bench->add_option("--out", out)->required();
  bench->add_option("--samples", samples);
  bench->add_option("--seed", seed);
  bench->add_option("--coarse-faces", coarse_faces);
  bench->add_option("--levels", levels);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--samples", gc_samples);

  CLI11_PARSE(app, argc, argv);

  try {
    if (remesh->parsed()) return cmd_remesh(input, out, coarse_faces, levels, seed, jitter);
    if (train_cmd->parsed()) return cmd_train(manifest, config, out, resume);
    if (encode->parsed())
      return cmd_encode(model, input, k, ranking, out, coarse_faces, levels, seed, jitter);
    if (decode->parsed()) return cmd_decode(model, stream, prefix_bytes, level, out);
    if (eval->parsed()) return cmd_eval(pred, gt, stream, samples, seed, threads, out);
    if (bench->parsed())
      return cmd_bench(manifest, model, methods, budgets, out, samples, seed, threads,
                       coarse_faces, levels);
    if (gradcheck->parsed()) return cmd_gradcheck(seed, gc_samples);
  } catch (const CodecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const TensorError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
