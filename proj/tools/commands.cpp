#include "commands.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "diffmatte/checkpoint.hpp"
#include "diffmatte/config.hpp"
#include "diffmatte/image_io.hpp"
#include "diffmatte/trimap.hpp"
#include "svg_plot.hpp"

#ifndef DIFFMATTE_VERSION
#define DIFFMATTE_VERSION "unknown"
#endif

namespace diffmatte::cli {

namespace fs = std::filesystem;

std::string version_string() { return DIFFMATTE_VERSION; }

Rng item_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

std::uint64_t resolve_seed(const std::string& explicit_seed, std::uint64_t fallback) {
  auto parse = [](const std::string& text, const char* what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
      throw DomainError(std::string(what) + " '" + text + "' is not an unsigned integer");
    }
    return v;
  };
  if (!explicit_seed.empty()) return parse(explicit_seed, "--seed");
  if (const char* env = std::getenv("DIFFMATTE_SEED"); env != nullptr && *env != '\0') {
    return parse(env, "DIFFMATTE_SEED");
  }
  return fallback;
}

namespace {

/// Runs f(i) for i < n on up to `jobs` threads; rethrows the failure with the lowest index.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// One manifest per output directory: written up front, completed at the end.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command_line, std::uint64_t seed)
      : path_(std::move(dir) / "manifest.txt"), command_(std::move(command_line)), seed_(seed),
        started_(timestamp()) {}

  void snapshot(const KeyValues& kv) { config_ = kv; }
  void begin() const { write("running"); }
  void finish() const { write(timestamp()); }

 private:
  void write(const std::string& finished) const {
    KeyValues kv;
    kv.set("command", command_);
    kv.set("version", version_string());
    kv.set("seed", std::to_string(seed_));
    kv.set("started", started_);
    kv.set("finished", finished);
    for (const auto& [k, v] : config_.entries()) kv.set("config." + k, v);
    write_text(path_, kv.str());
  }

  fs::path path_;
  std::string command_;
  std::uint64_t seed_;
  std::string started_;
  KeyValues config_;
};

std::string join_command(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

Conditioning conditioning_of(const DatasetItem& item) { return {item.image, item.trimap}; }

std::string alpha_file(const std::string& id) { return "alpha_" + id + ".pgm16"; }

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  for (auto& v : split(text, ',')) {
    if (!v.empty()) out.push_back(v);
  }
  return out;
}

}  // namespace

std::vector<ItemResult> infer_and_score(const MattingModel& model, const std::vector<DatasetItem>& items, int steps,
                                        SamplerMode mode, std::uint64_t seed, int jobs) {
  std::vector<ItemResult> results(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    Rng rng = item_rng(seed, i);
    SampleTrace trace = sample(model, conditioning_of(items[i]), steps, mode, rng);
    results[i].name = items[i].name;
    results[i].metrics = evaluate(trace.alpha, items[i].alpha, items[i].trimap);
    results[i].alpha = std::move(trace.alpha);
  });
  return results;
}

MetricReport mean_report(const std::vector<ItemResult>& results) {
  MetricReport m;
  if (results.empty()) return m;
  for (const auto& r : results) {
    m.sad += r.metrics.sad;
    m.mse += r.metrics.mse;
    m.grad += r.metrics.grad;
    m.conn += r.metrics.conn;
  }
  const double n = static_cast<double>(results.size());
  m.sad /= n;
  m.mse /= n;
  m.grad /= n;
  m.conn /= n;
  return m;
}

ConsistencyCurves diagnose_consistent(const MattingModel& model, const std::vector<DatasetItem>& items, int steps,
                                      std::uint64_t seed, int jobs) {
  if (items.empty()) throw DomainError("diagnose-consistent: empty dataset");
  std::vector<std::vector<double>> self(items.size()), cons(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    const DatasetItem& item = items[i];
    Rng a = item_rng(seed, i);
    Rng b = item_rng(seed, i);
    const SampleTrace s = sample(model, conditioning_of(item), steps, SamplerMode::Stochastic, a);
    const SampleTrace c = consistent_sample(model, conditioning_of(item), item.alpha, steps, b);
    for (int k = 0; k < steps; ++k) {
      self[i].push_back(sad(apply_known_regions(s.steps[k].prediction, item.trimap), item.alpha, item.trimap));
      cons[i].push_back(sad(apply_known_regions(c.steps[k].prediction, item.trimap), item.alpha, item.trimap));
    }
  });
  ConsistencyCurves curves;
  curves.sad_self.assign(static_cast<std::size_t>(steps), 0.0);
  curves.sad_consistent.assign(static_cast<std::size_t>(steps), 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (int k = 0; k < steps; ++k) {
      curves.sad_self[k] += self[i][k] / static_cast<double>(items.size());
      curves.sad_consistent[k] += cons[i][k] / static_cast<double>(items.size());
    }
  }
  return curves;
}

SweepKind parse_sweep_kind(const std::string& text) {
  if (text == "schedule") return SweepKind::Schedule;
  if (text == "input_scale") return SweepKind::InputScale;
  if (text == "nd") return SweepKind::Nd;
  if (text == "steps") return SweepKind::Steps;
  throw DomainError("unknown sweep kind '" + text + "' (expected schedule|input_scale|nd|steps)");
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::Schedule: return "schedule";
    case SweepKind::InputScale: return "input_scale";
    case SweepKind::Nd: return "nd";
    case SweepKind::Steps: return "steps";
  }
  return "?";
}

std::vector<std::string> default_sweep_values(SweepKind kind) {
  switch (kind) {
    case SweepKind::Schedule: return {"linear", "cosine", "sigmoid"};
    case SweepKind::InputScale: return {"1.0", "0.5", "0.2", "0.1", "0.01"};
    case SweepKind::Nd: return {"4", "8", "16"};
    case SweepKind::Steps: return {"1", "2", "5", "10"};
  }
  return {};
}

std::vector<SweepRow> run_sweep(const SweepRequest& request) {
  if (request.values.empty()) throw DomainError("sweep: empty grid");
  if (request.eval.empty()) throw DomainError("sweep: empty evaluation set");
  if (request.kind == SweepKind::Steps && request.checkpoint == nullptr) {
    throw DomainError("sweep --kind steps needs --checkpoint");
  }
  if (request.kind != SweepKind::Steps && request.train.empty()) throw DomainError("sweep: empty training set");

  std::vector<SweepRow> rows(request.values.size());
  // Training points run in parallel; each point evaluates serially so output is job-independent.
  const int point_jobs = request.kind == SweepKind::Steps ? 1 : request.jobs;
  const int eval_jobs = request.kind == SweepKind::Steps ? request.jobs : 1;
  parallel_for(rows.size(), point_jobs, [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.setting = request.values[i];
    try {
      if (request.kind == SweepKind::Steps) {
        int steps = 0;
        try {
          steps = std::stoi(row.setting);
        } catch (const std::exception&) {
          throw DomainError("steps value '" + row.setting + "' is not an integer");
        }
        row.metrics = mean_report(
            infer_and_score(*request.checkpoint, request.eval, steps, SamplerMode::Stochastic, request.seed, eval_jobs));
      } else {
        TrainConfig cfg = request.base;
        cfg.seed = request.seed;
        try {
          if (request.kind == SweepKind::Schedule) cfg.model.schedule.kind = parse_schedule_kind(row.setting);
          if (request.kind == SweepKind::InputScale) cfg.model.schedule.input_scale = std::stod(row.setting);
          if (request.kind == SweepKind::Nd) cfg.model.net.n_d = std::stoi(row.setting);
        } catch (const std::invalid_argument&) {
          throw DomainError("sweep value '" + row.setting + "' is not valid for " + to_string(request.kind));
        }
        std::vector<SyntheticSample> data;
        for (const auto& item : request.train) data.push_back(to_sample(item));
        const FitResult fitted = fit(cfg, data);
        row.metrics = mean_report(
            infer_and_score(fitted.model, request.eval, request.steps, SamplerMode::Stochastic, request.seed, eval_jobs));
      }
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string csv = "setting,sad,mse,grad,conn,status\n";
  for (const auto& r : rows) {
    if (r.ok) {
      csv += r.setting + "," + fmt(r.metrics.sad) + "," + fmt(r.metrics.mse) + "," + fmt(r.metrics.grad) + "," +
             fmt(r.metrics.conn) + ",ok\n";
    } else {
      std::string msg = r.error;
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
      csv += r.setting + ",,,,,failed: " + msg + "\n";
    }
  }
  return csv;
}

std::string eval_csv(const std::vector<ItemResult>& results) {
  std::string csv = "name,sad,mse,grad,conn\n";
  for (const auto& r : results) {
    csv += r.name + "," + fmt(r.metrics.sad) + "," + fmt(r.metrics.mse) + "," + fmt(r.metrics.grad) + "," +
           fmt(r.metrics.conn) + "\n";
  }
  const MetricReport m = mean_report(results);
  csv += "mean," + fmt(m.sad) + "," + fmt(m.mse) + "," + fmt(m.grad) + "," + fmt(m.conn) + "\n";
  return csv;
}

std::string consistency_csv(const ConsistencyCurves& curves) {
  std::string csv = "step,sad_self,sad_consistent\n";
  for (std::size_t k = 0; k < curves.sad_self.size(); ++k) {
    csv += std::to_string(k + 1) + "," + fmt(curves.sad_self[k]) + "," + fmt(curves.sad_consistent[k]) + "\n";
  }
  return csv;
}

namespace {

/// Command-line overrides of the model section of a training config.
struct ModelOverrides {
  std::string schedule;
  double input_scale = 0.0;
  int nd = 0;
  int nf = 0;
  int feature_stride = 0;

  void apply(TrainConfig& cfg) const {
    if (!schedule.empty()) cfg.model.schedule.kind = parse_schedule_kind(schedule);
    if (input_scale != 0.0) cfg.model.schedule.input_scale = input_scale;
    if (nd != 0) cfg.model.net.n_d = nd;
    if (nf != 0) cfg.model.net.n_f = nf;
    if (feature_stride != 0) cfg.model.net.feature_stride = feature_stride;
  }
};

void add_model_overrides(CLI::App* sub, ModelOverrides& o) {
  sub->add_option("--schedule", o.schedule, "Noise schedule: linear|cosine|sigmoid");
  sub->add_option("--input-scale", o.input_scale, "Input scaling b in (0, 1]");
  sub->add_option("--nd", o.nd, "Decoder base width");
  sub->add_option("--nf", o.nf, "Encoder feature channels");
  sub->add_option("--feature-stride", o.feature_stride, "Encoder feature stride (16 or 32)");
}

int cmd_gen_data(int count, int size, const std::string& out_dir, std::uint64_t seed, TrimapRadiusRange radii,
                 const std::string& command, int jobs, std::ostream& out) {
  if (count < 1) throw DomainError("--count must be >= 1");
  if (size < 16 || size % 16 != 0) throw DomainError("--size must be a positive multiple of 16");
  ensure_dir(out_dir);
  Manifest manifest(out_dir, command, seed);
  KeyValues snap;
  snap.set("count", std::to_string(count));
  snap.set("size", std::to_string(size));
  snap.set("radius_min", std::to_string(radii.lo));
  snap.set("radius_max", std::to_string(radii.hi));
  manifest.snapshot(snap);
  manifest.begin();
  parallel_for(static_cast<std::size_t>(count), jobs, [&](std::size_t i) {
    Rng rng = item_rng(seed, i);
    save_dataset_item(out_dir, static_cast<int>(i), gen_sample(rng, size, radii));
  });
  manifest.finish();
  out << "wrote " << count << " samples to " << out_dir << "\n";
  return kOk;
}

int cmd_train(const std::string& config_path, std::string data_dir, std::string out_dir, const std::string& seed_flag,
              int epochs_override, const ModelOverrides& overrides, const std::string& command, std::ostream& out) {
  KeyValues kv = KeyValues::load(config_path);
  const std::string cfg_data = kv.get_string("data", "");
  const std::string cfg_out = kv.get_string("out", "");
  if (data_dir.empty()) data_dir = cfg_data;
  if (out_dir.empty()) out_dir = cfg_out;
  if (data_dir.empty()) throw DomainError("train: no dataset (set --data or `data =` in the config)");
  if (out_dir.empty()) throw DomainError("train: no output directory (set --out or `out =` in the config)");
  TrainConfig cfg = TrainConfig::from_keyvalues(kv);
  kv.require_all_consumed();
  const bool config_has_seed = kv.contains("seed");
  cfg.seed = resolve_seed(seed_flag, config_has_seed ? cfg.seed : resolve_seed("", 0));
  if (epochs_override > 0) {
    cfg.epochs = epochs_override;
    if (cfg.uti_start_epoch > cfg.epochs) cfg.uti_start_epoch = -1;
  }
  overrides.apply(cfg);
  cfg.validate();

  const auto items = load_dataset(data_dir);
  if (items.empty()) throw DomainError("train: dataset " + data_dir + " is empty");
  std::vector<SyntheticSample> data;
  for (const auto& item : items) data.push_back(to_sample(item));

  ensure_dir(out_dir);
  Manifest manifest(out_dir, command, cfg.seed);
  KeyValues snap;
  cfg.write(snap);
  snap.set("data", data_dir);
  manifest.snapshot(snap);
  manifest.begin();

  std::string log = "epoch,uti,total,sp_l1,l2,lap,grad\n";
  FitOptions options;
  options.checkpoint_dir = fs::path(out_dir);
  options.on_epoch = [&](const EpochLog& e) {
    log += std::to_string(e.epoch + 1) + "," + (e.uti ? "1" : "0") + "," + fmt(e.mean.total) + "," +
           fmt(e.mean.sp_l1) + "," + fmt(e.mean.l2) + "," + fmt(e.mean.lap) + "," + fmt(e.mean.grad) + "\n";
    write_text(fs::path(out_dir) / "train_log.csv", log);
  };
  const FitResult result = fit(cfg, data, options);
  manifest.finish();
  out << "trained " << cfg.epochs << " epochs; final loss " << fmt(result.history.back().mean.total) << "; checkpoint "
      << (fs::path(out_dir) / "final.dmck").string() << "\n";
  return kOk;
}

int cmd_infer(const std::string& checkpoint, const std::string& image, const std::string& trimap,
              const std::string& out_file, const std::string& data_dir, const std::string& out_dir,
              const std::string& trace_dir, int steps, SamplerMode mode, std::uint64_t seed, int jobs,
              const std::string& command, std::ostream& out) {
  if (steps < 1) throw DomainError("--steps must be >= 1");
  const MattingModel model = load_checkpoint(checkpoint);
  const fs::path target_dir = data_dir.empty() ? fs::absolute(out_file).parent_path() : fs::path(out_dir);
  ensure_dir(target_dir);
  Manifest manifest(target_dir, command, seed);
  KeyValues snap;
  snap.set("checkpoint", checkpoint);
  snap.set("steps", std::to_string(steps));
  snap.set("sampler", to_string(mode));
  manifest.snapshot(snap);
  manifest.begin();

  if (data_dir.empty()) {
    DatasetItem item;
    item.name = fs::path(image).stem().string();
    item.image = read_ppm(image);
    item.trimap = snap_trimap(read_pgm(trimap));
    Rng rng = item_rng(seed, 0);
    const SampleTrace trace = sample(model, conditioning_of(item), steps, mode, rng);
    write_pgm(out_file, trace.alpha, fs::path(out_file).extension() == ".pgm16" ? 65535 : 255);
    if (!trace_dir.empty()) {
      ensure_dir(trace_dir);
      for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%03zu.pgm16", k);
        write_pgm(fs::path(trace_dir) / name, trace.steps[k].prediction, 65535);
      }
    }
    out << "wrote " << out_file << "\n";
  } else {
    const auto items = load_dataset(data_dir);
    std::vector<Tensor<float>> alphas(items.size());
    parallel_for(items.size(), jobs, [&](std::size_t i) {
      Rng rng = item_rng(seed, i);
      alphas[i] = sample(model, conditioning_of(items[i]), steps, mode, rng).alpha;
    });
    for (std::size_t i = 0; i < items.size(); ++i) {
      write_pgm(fs::path(out_dir) / alpha_file(items[i].name), alphas[i], 65535);
    }
    out << "wrote " << items.size() << " mattes to " << out_dir << "\n";
  }
  manifest.finish();
  return kOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& trimap_dir,
             const std::string& out_csv, int jobs, const std::string& command, std::ostream& out) {
  if (!fs::is_directory(gt_dir)) throw IoError("ground-truth directory " + gt_dir + " does not exist");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    const std::string f = entry.path().filename().string();
    if (f.starts_with("alpha_") && f.ends_with(".pgm16")) ids.push_back(f.substr(6, f.size() - 12));
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DomainError("eval: no alpha_*.pgm16 files in " + gt_dir);

  const fs::path dir = fs::absolute(out_csv).parent_path();
  ensure_dir(dir);
  Manifest manifest(dir, command, 0);
  manifest.begin();
  std::vector<ItemResult> results(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    const auto& id = ids[i];
    const Tensor<float> pred = read_pgm(fs::path(pred_dir) / alpha_file(id));
    const Tensor<float> gt = read_pgm(fs::path(gt_dir) / alpha_file(id));
    const Tensor<float> tri = snap_trimap(read_pgm(fs::path(trimap_dir) / ("trimap_" + id + ".pgm")));
    results[i].name = id;
    results[i].metrics = evaluate(pred, gt, tri);
  });
  write_text(out_csv, eval_csv(results));
  manifest.finish();
  const MetricReport m = mean_report(results);
  out << "mean sad " << fmt(m.sad) << " mse " << fmt(m.mse) << " grad " << fmt(m.grad) << " conn " << fmt(m.conn)
      << "\n";
  return kOk;
}

int cmd_sweep(SweepRequest request, const std::string& out_dir, const std::string& command, std::ostream& out) {
  ensure_dir(out_dir);
  Manifest manifest(out_dir, command, request.seed);
  KeyValues snap;
  request.base.write(snap);
  snap.set("sweep.kind", to_string(request.kind));
  std::string grid;
  for (const auto& v : request.values) grid += (grid.empty() ? "" : ",") + v;
  snap.set("sweep.values", grid);
  snap.set("sweep.steps", std::to_string(request.steps));
  manifest.snapshot(snap);
  manifest.begin();

  const auto rows = run_sweep(request);
  write_text(fs::path(out_dir) / "sweep.csv", sweep_csv(rows));
  Series sad_series{"SAD", {}};
  for (const auto& r : rows) sad_series.y.push_back(r.ok ? r.metrics.sad : std::numeric_limits<double>::quiet_NaN());
  write_text(fs::path(out_dir) / "sweep.svg",
             line_plot("SAD vs " + to_string(request.kind), to_string(request.kind), "SAD (x1000)", request.values,
                       {sad_series}));
  manifest.finish();
  int failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  out << "sweep over " << rows.size() << " settings (" << failed << " failed) written to " << out_dir << "\n";
  return kOk;
}

int cmd_diagnose(const std::string& checkpoint, const std::string& data_dir, int steps, const std::string& out_dir,
                 std::uint64_t seed, int jobs, const std::string& command, std::ostream& out) {
  if (steps < 1) throw DomainError("--steps must be >= 1");
  const MattingModel model = load_checkpoint(checkpoint);
  const auto items = load_dataset(data_dir);
  ensure_dir(out_dir);
  Manifest manifest(out_dir, command, seed);
  KeyValues snap;
  snap.set("checkpoint", checkpoint);
  snap.set("data", data_dir);
  snap.set("steps", std::to_string(steps));
  manifest.snapshot(snap);
  manifest.begin();
  const ConsistencyCurves curves = diagnose_consistent(model, items, steps, seed, jobs);
  write_text(fs::path(out_dir) / "consistent.csv", consistency_csv(curves));
  std::vector<std::string> ticks;
  for (int k = 1; k <= steps; ++k) ticks.push_back(std::to_string(k));
  write_text(fs::path(out_dir) / "consistent.svg",
             line_plot("Per-step SAD", "step", "SAD (x1000)", ticks,
                       {{"self renoising", curves.sad_self}, {"ground-truth renoising", curves.sad_consistent}}));
  manifest.finish();
  int better = 0;
  for (int k = 0; k < steps; ++k) better += curves.sad_consistent[k] <= curves.sad_self[k] ? 1 : 0;
  out << "consistent <= self at " << better << "/" << steps << " steps\n";
  return kOk;
}

int exit_code_for(const std::exception& e, std::ostream& err) {
  if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
    const bool content = pe->kind() == ParseError::Kind::BadSyntax || pe->kind() == ParseError::Kind::UnknownKey;
    err << "error: " << e.what() << "\n";
    return content ? kValidation : kIo;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const CheckpointError*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e)) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  if (dynamic_cast<const NumericError*>(&e)) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  }
  if (dynamic_cast<const DomainError*>(&e)) {
    err << "invalid input: " << e.what() << "\n";
    return kValidation;
  }
  err << "error: " << e.what() << "\n";
  return kIo;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-based alpha matting: data generation, training, inference and evaluation", "diffmatte"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  const std::string command = join_command(argc, argv);

  std::string seed;
  int jobs = 1;
  auto add_common = [&](CLI::App* sub, bool with_jobs) {
    sub->add_option("--seed", seed, "Random seed (default: $DIFFMATTE_SEED, else 0)");
    if (with_jobs) sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::Range(1, 256));
  };

  int count = 0, size = 64, radius_min = 1, radius_max = 8;
  std::string out_path;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic matting dataset");
  gen->add_option("--count", count, "Number of samples")->required();
  gen->add_option("--size", size, "Square image extent (multiple of 16)")->capture_default_str();
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--radius-min", radius_min, "Smallest trimap erosion radius")->capture_default_str();
  gen->add_option("--radius-max", radius_max, "Largest trimap erosion radius")->capture_default_str();
  add_common(gen, true);

  std::string config_path, data_dir;
  int epochs = 0;
  auto* train = app.add_subcommand("train", "Train a model from a key = value config file");
  train->add_option("--config", config_path, "Training config")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data_dir, "Dataset directory (overrides `data`)");
  train->add_option("--out", out_path, "Output directory (overrides `out`)");
  train->add_option("--epochs", epochs, "Override the configured epoch count");
  ModelOverrides overrides;
  add_model_overrides(train, overrides);
  add_common(train, false);

  std::string checkpoint, image, trimap, out_dir, sampler = "stochastic";
  int steps = 10;
  auto* infer = app.add_subcommand("infer", "Predict alpha mattes");
  infer->add_option("--ckpt,--checkpoint", checkpoint, "Model checkpoint")->required();
  auto* image_opt = infer->add_option("--image", image, "Input image (P6)");
  auto* trimap_opt = infer->add_option("--trimap", trimap, "Trimap (P5)");
  auto* out_opt = infer->add_option("--out", out_path, "Output matte (.pgm, or .pgm16 for 16 bits)");
  auto* data_opt = infer->add_option("--data", data_dir, "Dataset directory (batch mode)");
  auto* out_dir_opt = infer->add_option("--out-dir", out_dir, "Output directory (batch mode)");
  infer->add_option("--steps", steps, "Reverse steps")->capture_default_str();
  infer->add_option("--mode,--sampler", sampler, "stochastic|deterministic")->capture_default_str();
  std::string trace_dir;
  auto* trace_opt = infer->add_option("--trace-dir", trace_dir, "Write every per-step prediction here");
  add_common(infer, true);
  data_opt->excludes(image_opt)->excludes(trimap_opt)->excludes(out_opt);
  out_dir_opt->needs(data_opt);
  trace_opt->excludes(data_opt);

  std::string pred_dir, gt_dir, trimap_dir;
  auto* eval = app.add_subcommand("eval", "Score predicted mattes against ground truth");
  eval->add_option("--pred", pred_dir, "Directory of predicted alpha_*.pgm16")->required();
  eval->add_option("--gt", gt_dir, "Directory of ground-truth alpha_*.pgm16")->required();
  eval->add_option("--trimap", trimap_dir, "Directory of trimap_*.pgm")->required();
  eval->add_option("--out", out_path, "CSV report")->required();
  add_common(eval, true);

  std::string kind, values, eval_dir;
  auto* sweep = app.add_subcommand("sweep", "Ablation sweep at toy scale");
  sweep->add_option("--kind", kind, "schedule|input_scale|nd|steps")->required();
  sweep->add_option("--values", values, "Comma-separated grid (default depends on kind)");
  sweep->add_option("--data", data_dir, "Training dataset (training kinds)");
  sweep->add_option("--eval-data", eval_dir, "Evaluation dataset (default: --data)");
  sweep->add_option("--config", config_path, "Base training config");
  sweep->add_option("--ckpt,--checkpoint", checkpoint, "Checkpoint for --kind steps");
  sweep->add_option("--steps", steps, "Reverse steps used for evaluation")->capture_default_str();
  sweep->add_option("--epochs", epochs, "Override the configured epoch count");
  add_model_overrides(sweep, overrides);
  sweep->add_option("--out", out_dir, "Output directory")->required();
  add_common(sweep, true);

  auto* diag = app.add_subcommand("diagnose-consistent", "Per-step SAD: self vs ground-truth renoising");
  diag->add_option("--ckpt,--checkpoint", checkpoint, "Model checkpoint")->required();
  diag->add_option("--data", data_dir, "Dataset with ground truth")->required();
  diag->add_option("--steps", steps, "Reverse steps")->capture_default_str();
  diag->add_option("--out", out_dir, "Output directory")->required();
  add_common(diag, true);

  std::vector<std::string> args(argv + 1, argv + argc);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
    if (infer->parsed() && data_dir.empty() && (image.empty() || trimap.empty() || out_path.empty())) {
      throw CLI::RequiredError("infer needs --image, --trimap and --out (or --data with --out-dir)");
    }
    if (infer->parsed() && !data_dir.empty() && out_dir.empty()) throw CLI::RequiredError("--out-dir");
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    out << (parsed.empty() ? app.help() : parsed.front()->help());
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const auto parsed = app.get_subcommands();
    err << (parsed.empty() ? app.help() : parsed.front()->help());
    return kUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(count, size, out_path, resolve_seed(seed, 0), {radius_min, radius_max}, command, jobs, out);
    }
    if (train->parsed()) return cmd_train(config_path, data_dir, out_path, seed, epochs, overrides, command, out);
    if (infer->parsed()) {
      return cmd_infer(checkpoint, image, trimap, out_path, data_dir, out_dir, trace_dir, steps, parse_sampler_mode(sampler),
                       resolve_seed(seed, 0), jobs, command, out);
    }
    if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, trimap_dir, out_path, jobs, command, out);
    if (sweep->parsed()) {
      SweepRequest req;
      req.kind = parse_sweep_kind(kind);
      req.values = values.empty() ? default_sweep_values(req.kind) : split_values(values);
      bool config_seed = false;
      if (!config_path.empty()) {
        KeyValues kv = KeyValues::load(config_path);
        config_seed = kv.contains("seed");
        kv.get_string("data", "");
        kv.get_string("out", "");
        req.base = TrainConfig::from_keyvalues(kv);
        kv.require_all_consumed();
      }
      if (epochs > 0) {
        req.base.epochs = epochs;
        if (req.base.uti_start_epoch > epochs) req.base.uti_start_epoch = -1;
      }
      overrides.apply(req.base);
      req.base.validate();
      req.seed = resolve_seed(seed, config_seed ? req.base.seed : resolve_seed("", 0));
      req.steps = steps;
      req.jobs = jobs;
      MattingModel loaded;
      if (req.kind == SweepKind::Steps) {
        if (checkpoint.empty()) throw CLI::RequiredError("--checkpoint");
        loaded = load_checkpoint(checkpoint);
        req.checkpoint = &loaded;
      } else {
        if (data_dir.empty()) throw CLI::RequiredError("--data");
        req.train = load_dataset(data_dir);
      }
      const std::string evald = eval_dir.empty() ? data_dir : eval_dir;
      if (evald.empty()) throw CLI::RequiredError("--eval-data");
      req.eval = load_dataset(evald);
      return cmd_sweep(std::move(req), out_dir, command, out);
    }
    if (diag->parsed()) return cmd_diagnose(checkpoint, data_dir, steps, out_dir, resolve_seed(seed, 0), jobs, command, out);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    return exit_code_for(e, err);
  }
  err << app.help();
  return kUsage;
}

}  // namespace diffmatte::cli
