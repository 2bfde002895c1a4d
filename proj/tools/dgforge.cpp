// dgforge command-line front end: gen-toy, train, sample, eval, filter, export.

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dgforge/dgforge.hpp"

namespace {

using namespace dgforge;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration (defaults apply when omitted)");
  cmd->add_option("--seed", c.seed, "Seed overriding the configuration's seed");
  cmd->add_option("--out", c.out, "Output directory")->required();
}

RunConfig resolve_config(const Common& c, const RunConfig* fallback = nullptr) {
  RunConfig cfg = !c.config.empty() ? load_config(c.config) : fallback ? *fallback : RunConfig{};
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

/// Exclusive lock on an output directory for the lifetime of a command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".dgforge.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw ValidationError("output directory '" + dir.string() + "' is locked by another run (remove " +
                            path_.string() + " if stale)");
    ::close(fd);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

struct PoseLine {
  std::string text;  // original line, without the newline
  std::string object_id;
  Vec pose;
};

std::vector<PoseLine> read_pose_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open poses '" + path + "'");
  std::vector<PoseLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const Json j = parse_json_text(line, where);
    if (!j.is_object() || !j.contains("object_id") || !j.contains("pose") || !j["object_id"].is_string())
      throw ValidationError(where + ": record needs 'object_id' and 'pose'");
    const auto v = pose_array(j["pose"], where);
    out.push_back({line, j["object_id"].get<std::string>(), Eigen::Map<const Vec>(v.data(), v.size())});
  }
  return out;
}

ObjectMap objects_for(const Dataset& d, const ObjectSampling& s, const std::vector<PoseLine>& poses) {
  std::vector<std::string> ids;
  for (const auto& p : poses) ids.push_back(p.object_id);
  return load_objects(d, s, ids);
}

int cmd_gen_toy(const Common& c, std::optional<int> objects) {
  RunConfig cfg = resolve_config(c);
  if (objects) cfg.toy.num_objects = *objects;
  cfg.validate();
  const fs::path out(c.out);
  DirLock lock(out);
  const auto model = default_hand(cfg.hand);
  std::vector<ToyObjectResult> results(static_cast<std::size_t>(cfg.toy.num_objects));
  parallel_for(results.size(), [&](std::size_t i) {
    results[i] = generate_toy_object(static_cast<int>(i), cfg, model, cfg.seed);
  });
  const Json manifest = write_dataset(out, results, to_json(cfg));
  std::size_t train = 0;
  for (const auto& r : results) train += r.spec.split == "train";
  std::cerr << "gen-toy: " << results.size() << " objects (" << train << " train), "
            << manifest["records"]["count"].get<std::size_t>() << " accepted grasps -> " << out.string() << "\n";
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data, const std::string& resume) {
  std::optional<Checkpoint> prev;
  if (!resume.empty()) prev = load_checkpoint(resume);
  RunConfig cfg = resolve_config(c, prev ? &prev->config : nullptr);
  const auto model = default_hand(cfg.hand);
  const Dataset d = read_dataset(data, model.pose_dim());
  const ObjectMap objects = load_objects(d, cfg.objects, train_object_ids(d));
  const TrainSet ts = make_train_set(d, objects, model);
  const fs::path out(c.out);
  DirLock lock(out);
  const long total = cfg.train.iterations;
  Checkpoint ck = train_checkpoint(cfg, ts, prev ? &*prev : nullptr, [&](const LossRecord& r) {
    if (r.iteration % 500 == 0 || r.iteration == (prev ? prev->state.iteration : 0) + total)
      std::cerr << "train: iteration " << r.iteration << " loss " << r.loss.total << "\n";
  });
  write_file_atomic(out / "loss.csv", loss_curve_csv(ck.state.curve));
  write_file_atomic(out / "checkpoint.json", dump_json(to_json(ck)));
  return kExitOk;
}

int cmd_sample(const Common& c, const std::string& checkpoint, const std::string& data,
               const std::vector<std::string>& ids, std::optional<int> n, const std::string& mode) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  RunConfig cfg = resolve_config(c, &ck.config);
  if (!mode.empty()) cfg.guidance.mode = parse_guidance_mode(mode);
  if (n) cfg.sample.num_samples = *n;
  cfg.validate();
  const auto model = default_hand(cfg.hand);
  if (ck.state.ema.pose_dim != model.pose_dim())
    throw ValidationError("sample: checkpoint pose dimension " + std::to_string(ck.state.ema.pose_dim) +
                          " does not match the configured hand (" + std::to_string(model.pose_dim()) + ")");
  const Dataset d = read_dataset(data, model.pose_dim());
  std::vector<std::string> chosen = ids;
  if (chosen.empty()) {
    for (const auto& o : d.objects)
      if (cfg.sample.split == "all" || o.split == cfg.sample.split) chosen.push_back(o.id);
    if (cfg.sample.max_objects > 0 && static_cast<int>(chosen.size()) > cfg.sample.max_objects)
      chosen.resize(static_cast<std::size_t>(cfg.sample.max_objects));
  }
  const ObjectMap objects = load_objects(d, cfg.objects, chosen);
  for (const auto& id : chosen)
    if (!objects.count(id)) throw ValidationError("sample: unknown object '" + id + "'");
  const fs::path out(c.out);
  DirLock lock(out);
  std::string text;
  for (const auto& id : chosen) {
    const auto recs = sample_object(ck, cfg, model, *objects.at(id), static_cast<std::size_t>(cfg.sample.num_samples),
                                    cfg.seed);
    for (const auto& r : recs) text += to_json(r).dump() + "\n";
  }
  write_file_atomic(out / "samples.jsonl", text);
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& poses_path, const std::string& data) {
  const RunConfig cfg = resolve_config(c);
  const auto model = default_hand(cfg.hand);
  const Dataset d = read_dataset(data);
  const auto lines = read_pose_lines(poses_path);
  const ObjectMap objects = objects_for(d, cfg.objects, lines);
  std::vector<std::pair<std::string, Vec>> poses;
  for (const auto& l : lines) poses.emplace_back(l.object_id, l.pose);
  std::size_t skipped = 0;
  const auto rows = evaluate_poses(poses, objects, model, cfg.eval, &skipped);
  if (skipped) std::cerr << "eval: warning: skipped " << skipped << " pose(s) with unknown object_id\n";
  std::vector<Vec> kept;
  for (const auto& p : poses)
    if (objects.count(p.first)) kept.push_back(p.second);
  const fs::path out(c.out);
  DirLock lock(out);
  write_file_atomic(out / "eval.csv", eval_csv(rows));
  write_file_atomic(out / "summary.json", dump_json(to_json(summarize(rows, kept, skipped))));
  return kExitOk;
}

int cmd_filter(const Common& c, const std::string& poses_path, const std::string& data) {
  const RunConfig cfg = resolve_config(c);
  const auto model = default_hand(cfg.hand);
  const Dataset d = read_dataset(data);
  const auto lines = read_pose_lines(poses_path);
  const ObjectMap objects = objects_for(d, cfg.objects, lines);
  for (const auto& l : lines)
    if (!objects.count(l.object_id)) throw ValidationError("filter: unknown object '" + l.object_id + "'");
  std::vector<std::pair<std::string, Vec>> poses;
  for (const auto& l : lines) poses.emplace_back(l.object_id, l.pose);
  const auto rows = evaluate_poses(poses, objects, model, cfg.eval);
  std::string accepted, rejected;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].report;
    if (r.accepted) {
      accepted += lines[i].text + "\n";
      continue;
    }
    Json reasons = Json::array();
    for (auto reason : r.reasons) reasons.push_back(reason_code(reason));
    rejected += Json{{"index", i},
                     {"object_id", lines[i].object_id},
                     {"reasons", reasons},
                     {"pen_mm", r.pen_mm},
                     {"pen_cyl_mm", r.pen_cyl_mm},
                     {"suc6", r.suc6}}
                    .dump() +
                "\n";
  }
  const fs::path out(c.out);
  DirLock lock(out);
  write_file_atomic(out / "accepted.jsonl", accepted);
  write_file_atomic(out / "rejected.jsonl", rejected);
  std::cerr << "filter: " << rows.size() << " input, "
            << std::count_if(rows.begin(), rows.end(), [](const EvalRow& r) { return r.report.accepted; })
            << " accepted\n";
  return kExitOk;
}

int cmd_export(const Common& c, const std::string& poses_path, const std::string& data, const std::string& format) {
  if (format != "ply" && format != "obj") throw ValidationError("export: unknown format '" + format + "' (ply or obj)");
  const RunConfig cfg = resolve_config(c);
  const auto model = default_hand(cfg.hand);
  const Dataset d = read_dataset(data);
  const auto lines = read_pose_lines(poses_path);
  const fs::path out(c.out);
  DirLock lock(out);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (l.pose.size() != model.pose_dim())
      throw ValidationError("export: pose " + std::to_string(i) + " has " + std::to_string(l.pose.size()) +
                            " entries, expected " + std::to_string(model.pose_dim()));
    auto it = d.mesh_files.find(l.object_id);
    if (it == d.mesh_files.end()) throw ValidationError("export: unknown object '" + l.object_id + "'");
    TriangleMesh m = hand_mesh(HandPose(l.pose), model);
    m.append(read_ply_file(d.root / it->second).mesh());
    char name[64];
    std::snprintf(name, sizeof name, "pose_%05zu.%s", i, format.c_str());
    std::ostringstream ss;
    if (format == "ply") {
      write_ply(ss, m);
    } else {
      write_obj(ss, m);
    }
    write_file_atomic(out / name, ss.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dgforge: physics-guided diffusion for dexterous grasps (DGFORGE_THREADS caps worker threads)"};
  app.require_subcommand(1);

  Common gen_c, train_c, sample_c, eval_c, filter_c, export_c;
  std::optional<int> gen_objects, sample_n;
  std::string train_data, train_resume, sample_ckpt, sample_data, sample_mode, eval_poses, eval_data, filter_poses,
      filter_data, export_poses, export_data, export_format = "ply";
  std::vector<std::string> sample_objects;

  auto* gen = app.add_subcommand("gen-toy", "Generate toy objects and reference grasps");
  add_common(gen, gen_c);
  gen->add_option("--objects", gen_objects, "Number of objects (overrides toy.num_objects)");

  auto* train = app.add_subcommand("train", "Train the denoiser on a dataset");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--resume", train_resume, "Checkpoint to continue from");

  auto* sample = app.add_subcommand("sample", "Sample grasps for objects");
  add_common(sample, sample_c);
  sample->add_option("--checkpoint", sample_ckpt, "Checkpoint file")->required();
  sample->add_option("--data", sample_data, "Dataset directory holding the objects")->required();
  sample->add_option("--object", sample_objects, "Object id (repeatable; default: sample.split objects)");
  sample->add_option("--n", sample_n, "Samples per object (overrides sample.num_samples)");
  sample->add_option("--mode", sample_mode, "Guidance mode: none, offset or dsg (overrides guidance.mode)");

  auto* eval = app.add_subcommand("eval", "Evaluate poses: per-pose CSV and summary JSON");
  add_common(eval, eval_c);
  eval->add_option("--poses", eval_poses, "Line-delimited JSON poses")->required();
  eval->add_option("--data", eval_data, "Dataset directory holding the objects")->required();

  auto* filter = app.add_subcommand("filter", "Split poses into accepted and rejected");
  add_common(filter, filter_c);
  filter->add_option("--poses", filter_poses, "Line-delimited JSON poses")->required();
  filter->add_option("--data", filter_data, "Dataset directory holding the objects")->required();

  auto* exp = app.add_subcommand("export", "Write hand + object meshes per pose");
  add_common(exp, export_c);
  exp->add_option("--poses", export_poses, "Line-delimited JSON poses")->required();
  exp->add_option("--data", export_data, "Dataset directory holding the objects")->required();
  exp->add_option("--format", export_format, "ply or obj")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_toy(gen_c, gen_objects);
    if (*train) return cmd_train(train_c, train_data, train_resume);
    if (*sample) return cmd_sample(sample_c, sample_ckpt, sample_data, sample_objects, sample_n, sample_mode);
    if (*eval) return cmd_eval(eval_c, eval_poses, eval_data);
    if (*filter) return cmd_filter(filter_c, filter_poses, filter_data);
    if (*exp) return cmd_export(export_c, export_poses, export_data, export_format);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
