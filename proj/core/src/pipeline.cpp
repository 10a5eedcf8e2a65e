#include "promptmr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "promptmr/checkpoint.hpp"
#include "promptmr/container.hpp"
#include "promptmr/ops.hpp"
#include "promptmr/optim.hpp"

namespace promptmr {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) { return splitmix(base ^ fnv1a(tag)); }

std::string pad3(int i) {
  std::ostringstream os;
  os << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

std::vector<std::size_t> spaced_frames(std::size_t n_frames, int count) {
  std::vector<std::size_t> out;
  if (count <= 0 || static_cast<std::size_t>(count) >= n_frames) {
    out.resize(n_frames);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  for (int i = 0; i < count; ++i) {
    out.push_back(static_cast<std::size_t>((2 * i + 1) * n_frames / (2 * static_cast<std::size_t>(count))));
  }
  return out;
}

RealArray take_frames(const RealArray& a, const std::vector<std::size_t>& frames) {
  std::vector<RealArray> parts;
  parts.reserve(frames.size());
  for (std::size_t f : frames) parts.push_back(take(a, f));
  return stack(parts);
}

double mean_of(const std::vector<MetricRow>& rows, double MetricRow::*field) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    const double v = r.*field;
    if (std::isfinite(v)) {
      s += v;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

MetricAggregate summarize(const std::vector<MetricRow>& rows) {
  MetricAggregate a;
  a.cases = rows.size();
  a.nmse = mean_of(rows, &MetricRow::nmse);
  a.psnr = mean_of(rows, &MetricRow::psnr);
  a.ssim = mean_of(rows, &MetricRow::ssim);
  return a;
}

double epoch_lr(const TrainConfig& t, int epoch) {
  return (t.epochs > 1 && epoch == t.epochs - 1) ? t.optim.final_lr : t.optim.lr;
}

int steps_per_epoch(const TrainConfig& t, std::size_t n_train) {
  return t.steps_per_epoch > 0 ? t.steps_per_epoch : static_cast<int>(n_train);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
}

class TrainLog {
 public:
  TrainLog(const fs::path& path, bool append) : path_(path) {
    if (!append || !fs::exists(path)) write_text(path, "epoch,lr,train_loss,val_nmse,val_psnr,val_ssim,best\n");
  }
  void add(const EpochLog& e) {
    std::ofstream os(path_, std::ios::app);
    os << std::setprecision(10) << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val.nmse << ','
       << e.val.psnr << ',' << e.val.ssim << ',' << (e.best ? 1 : 0) << '\n';
  }

 private:
  fs::path path_;
};

void check_finite(double v, const std::string& what, int epoch, long step) {
  if (!std::isfinite(v)) {
    throw DivergenceError(what + " is not finite (" + std::to_string(v) + ") at epoch " + std::to_string(epoch) +
                          ", step " + std::to_string(step));
  }
}

std::string task_of(FrameAxis a) { return to_string(a); }

// Stage-I magnitudes of every (case, acceleration) pair under the evaluation masks.
struct Stage1Volume {
  const LoadedCase* lc = nullptr;
  int accel = 0;
  RealArray recon;
};

std::vector<Stage1Volume> stage1_volumes(const UnrolledModel& model, const std::vector<LoadedCase>& cases,
                                         const ReconConfig& cfg) {
  std::vector<Stage1Volume> out;
  for (const auto& lc : cases) {
    for (int acc : cfg.accelerations) {
      const UndersampleMask mask = eval_mask(cfg, lc.entry.id, acc);
      out.push_back({&lc, acc, reconstruct_stage1(model, apply_mask(lc.record.kspace, mask), mask)});
    }
  }
  return out;
}

std::vector<MetricRow> score_stage2(const Refiner& ref, const std::vector<Stage1Volume>& vols, bool identity) {
  std::vector<MetricRow> rows;
  for (const auto& v : vols) {
    const RealArray pred = identity ? v.recon : refine(ref, v.recon, v.lc->record.kspace.axis_meaning);
    rows.push_back(evaluate_case(pred, v.lc->record.target, v.lc->entry.id, task_of(v.lc->entry.axis), v.accel,
                                 "promptmr", identity ? "stage1" : "stage2"));
  }
  return rows;
}

}  // namespace

// ---- data set ----------------------------------------------------------------------

std::vector<CaseEntry> SplitManifest::select(const std::string& split, TaskSet tasks) const {
  const auto axes = task_axes(tasks);
  std::vector<CaseEntry> out;
  for (const auto& c : cases) {
    if (c.split == split && std::find(axes.begin(), axes.end(), c.axis) != axes.end()) out.push_back(c);
  }
  return out;
}

fs::path case_dir(const fs::path& data_dir, const std::string& id) { return data_dir / "cases" / id; }

SplitManifest read_splits(const fs::path& data_dir) {
  const fs::path p = data_dir / "splits.json";
  std::ifstream is(p);
  if (!is) throw DataError("no split manifest at " + p.string() + " (run `simulate` first)");
  SplitManifest m;
  try {
    const auto j = nlohmann::json::parse(is);
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("cases")) {
      m.cases.push_back(CaseEntry{c.at("id").get<std::string>(), frame_axis_from_string(c.at("axis").get<std::string>()),
                                  c.at("split").get<std::string>(), c.at("seed").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("splits.json", e.what());
  } catch (const ConfigError& e) {
    throw FormatError("splits.json", e.what());
  }
  return m;
}

std::vector<LoadedCase> load_cases(const fs::path& data_dir, const std::vector<CaseEntry>& entries) {
  std::vector<LoadedCase> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(LoadedCase{e, read_case(case_dir(data_dir, e.id))});
  return out;
}

PhantomSpec case_spec(const ReconConfig& cfg, FrameAxis axis, std::uint64_t seed) {
  PhantomSpec s;
  s.ky = cfg.simulate.ky;
  s.kx = cfg.simulate.kx;
  s.n_coils = cfg.simulate.coils;
  s.n_frames = cfg.simulate.frames;
  s.frame_axis = axis;
  s.noise_std = cfg.simulate.noise_std;
  s.motion_amplitude = cfg.simulate.motion_amplitude;
  s.seed = seed;
  if (axis == FrameAxis::contrast) {
    const auto [lo, hi] = cfg.simulate.contrast_range;
    s.contrast_schedule.resize(s.n_frames);
    for (std::size_t f = 0; f < s.n_frames; ++f)
      s.contrast_schedule[f] = s.n_frames > 1 ? lo + (hi - lo) * double(f) / double(s.n_frames - 1) : hi;
  }
  return s;
}

UndersampleMask eval_mask(const ReconConfig& cfg, const std::string& case_id, int acceleration) {
  return make_mask(static_cast<int>(cfg.simulate.ky), acceleration, cfg.mask.acs_lines, cfg.mask.scheme,
                   derive_seed(static_cast<std::uint64_t>(acceleration), "eval-mask/" + case_id));
}

SplitManifest cmd_simulate(const ReconConfig& cfg) {
  cfg.validate();
  SplitManifest m;
  m.seed = cfg.seed;
  const std::pair<const char*, int> splits[] = {
      {"train", cfg.simulate.train}, {"val", cfg.simulate.val}, {"test", cfg.simulate.test}};
  for (FrameAxis axis : task_axes(cfg.task)) {
    for (const auto& [split, count] : splits) {
      for (int i = 0; i < count; ++i) {
        const std::string id = std::string(to_string(axis)) + "_" + split + "_" + pad3(i);
        m.cases.push_back(CaseEntry{id, axis, split, derive_seed(cfg.seed, "case/" + id)});
      }
    }
  }
  fs::create_directories(cfg.data_dir / "cases");
  nlohmann::json j;
  j["seed"] = m.seed;
  j["cases"] = nlohmann::json::array();
  for (const auto& c : m.cases) {
    write_case(simulate_case(case_spec(cfg, c.axis, c.seed)), case_dir(cfg.data_dir, c.id));
    j["cases"].push_back({{"id", c.id}, {"axis", to_string(c.axis)}, {"split", c.split}, {"seed", c.seed}});
  }
  write_text(cfg.data_dir / "splits.json", j.dump(2) + "\n");
  write_text(cfg.data_dir / "simulate.yaml", dump_config(cfg));
  spdlog::info("simulated {} cases into {}", m.cases.size(), cfg.data_dir.string());
  return m;
}

// ---- training ------------------------------------------------------------------------

fs::path stage_dir(const ReconConfig& cfg, int stage) { return cfg.run_dir / ("stage" + std::to_string(stage)); }

std::vector<MetricRow> score_stage1(const UnrolledModel& model, const std::vector<LoadedCase>& cases, const ReconConfig& cfg,
                                    int frames) {
  ag::NoGradGuard ng;
  std::vector<MetricRow> rows;
  for (const auto& lc : cases) {
    const auto centers = spaced_frames(lc.record.kspace.frames(), frames);
    const RealArray target = take_frames(lc.record.target, centers);
    for (int acc : cfg.accelerations) {
      const UndersampleMask mask = eval_mask(cfg, lc.entry.id, acc);
      const KSpaceVolume y = apply_mask(lc.record.kspace, mask);
      std::vector<RealArray> parts;
      for (std::size_t c : centers) parts.push_back(model.reconstruct_frame(y, mask, c).array());
      rows.push_back(evaluate_case(stack(parts), target, lc.entry.id, task_of(lc.entry.axis), acc,
                                   to_string(model.config().family), "stage1"));
    }
  }
  return rows;
}

TrainSummary cmd_train_stage1(const ReconConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  const TrainConfig& tc = cfg.stage1;
  const SplitManifest manifest = read_splits(cfg.data_dir);
  const auto train = load_cases(cfg.data_dir, manifest.select("train", cfg.task));
  const auto val = load_cases(cfg.data_dir, manifest.select("val", cfg.task));
  if (train.empty()) throw DataError("no training cases for task set '" + std::string(to_string(cfg.task)) + "'");

  UnrolledModel model(cfg.model, derive_seed(cfg.seed, "stage1/init"));
  AdamW adam(model.params().vars(), tc.optim);
  const fs::path dir = stage_dir(cfg, 1);
  fs::create_directories(dir);

  TrainState st;
  std::mt19937_64 rng(derive_seed(cfg.seed, "stage1/sampler"));
  const bool resumed = opt.resume && fs::exists(dir / "state");
  if (resumed) {
    st = load_train_state(dir / "state", model.params(), adam);
    rng = deserialize_rng(st.rng_state);
    spdlog::info("stage1: resumed at epoch {} (step {})", st.epoch, st.step);
  }
  write_text(dir / "config.yaml", dump_config(cfg));
  TrainLog log(dir / "train_log.csv", resumed);

  TrainSummary out;
  out.checkpoint = dir / "checkpoint";
  const int spe = steps_per_epoch(tc, train.size());
  const int last = opt.stop_after_epochs >= 0 ? std::min(tc.epochs, opt.stop_after_epochs) : tc.epochs;
  const double inv_accum = 1.0 / tc.grad_accum;

  for (int epoch = st.epoch; epoch < last; ++epoch) {
    const double lr = epoch_lr(tc, epoch);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (int s = 0; s < spe; ++s) {
      adam.zero_grad();
      double step_loss = 0.0;
      for (int m = 0; m < tc.grad_accum; ++m) {
        const auto& lc = train[order[static_cast<std::size_t>(s * tc.grad_accum + m) % order.size()]];
        const std::size_t nf = lc.record.kspace.frames();
        const std::size_t center = std::uniform_int_distribution<std::size_t>(0, nf - 1)(rng);
        const int acc = cfg.accelerations[std::uniform_int_distribution<std::size_t>(0, cfg.accelerations.size() - 1)(rng)];
        const std::uint64_t mseed = rng();
        const UndersampleMask mask =
            make_mask(static_cast<int>(lc.record.kspace.ky()), acc, cfg.mask.acs_lines, cfg.mask.scheme, mseed);
        const ag::Var loss = ssim_loss(model.reconstruct_frame(apply_mask(lc.record.kspace, mask), mask, center),
                                       take(lc.record.target, center));
        check_finite(loss.item(), "stage1 loss", epoch, st.step);
        ag::backward(tc.grad_accum > 1 ? ag::scale(loss, inv_accum) : loss);
        step_loss += loss.item() * inv_accum;
      }
      check_finite(adam.step(lr), "stage1 gradient norm", epoch, st.step);
      ++st.step;
      st.loss_history.push_back(step_loss);
      epoch_loss += step_loss;
    }

    EpochLog e;
    e.epoch = epoch + 1;
    e.lr = lr;
    e.train_loss = epoch_loss / spe;
    e.val = summarize(score_stage1(model, val, cfg, tc.val_frames));
    // Without validation cases the latest model is kept.
    e.best = val.empty() || e.val.ssim > st.best_val_ssim;
    if (e.best) {
      st.best_val_ssim = val.empty() ? st.best_val_ssim : e.val.ssim;
      save_stage1(out.checkpoint, model, {{"epoch", e.epoch}, {"val_ssim", e.val.ssim}, {"task", to_string(cfg.task)}});
    }
    st.epoch = epoch + 1;
    st.rng_state = serialize_rng(rng);
    save_train_state(dir / "state", st, model.params(), adam);
    log.add(e);
    spdlog::info("stage1 epoch {}/{}: loss {:.5f}, val ssim {:.4f} psnr {:.2f}{}", e.epoch, tc.epochs, e.train_loss,
                 e.val.ssim, e.val.psnr, e.best ? " *" : "");
    out.epochs.push_back(e);
  }
  out.step_losses = st.loss_history;
  out.best_val_ssim = st.best_val_ssim;
  return out;
}

TrainSummary cmd_train_stage2(const ReconConfig& cfg, const fs::path& stage1_checkpoint, const TrainOptions& opt) {
  cfg.validate();
  const TrainConfig& tc = cfg.stage2;
  const SplitManifest manifest = read_splits(cfg.data_dir);
  const auto train = load_cases(cfg.data_dir, manifest.select("train", cfg.task));
  const auto val = load_cases(cfg.data_dir, manifest.select("val", cfg.task));
  if (train.empty()) throw DataError("no training cases for task set '" + std::string(to_string(cfg.task)) + "'");

  const UnrolledModel stage1 = load_stage1(stage1_checkpoint);
  spdlog::info("stage2: precomputing Stage-I outputs");
  const auto train_vols = stage1_volumes(stage1, train, cfg);
  const auto val_vols = stage1_volumes(stage1, val, cfg);

  Refiner model(cfg.refine, derive_seed(cfg.seed, "stage2/init"));
  AdamW adam(model.params().vars(), tc.optim);
  const fs::path dir = stage_dir(cfg, 2);
  fs::create_directories(dir);

  TrainState st;
  std::mt19937_64 rng(derive_seed(cfg.seed, "stage2/sampler"));
  const bool resumed = opt.resume && fs::exists(dir / "state");
  TrainSummary out;
  out.checkpoint = dir / "checkpoint";
  nlohmann::json info{{"stage1_checkpoint", fs::absolute(stage1_checkpoint).string()}};
  if (resumed) {
    st = load_train_state(dir / "state", model.params(), adam);
    rng = deserialize_rng(st.rng_state);
    spdlog::info("stage2: resumed at epoch {} (step {})", st.epoch, st.step);
  } else {
    // The untrained refiner is the identity; it is the reference every epoch must beat.
    const auto base = summarize(score_stage2(model, val_vols, true));
    st.best_val_ssim = val.empty() ? -1.0 : base.ssim;
    info["epoch"] = 0;
    info["val_ssim"] = base.ssim;
    save_stage2(out.checkpoint, model, info);
  }
  write_text(dir / "config.yaml", dump_config(cfg));
  TrainLog log(dir / "train_log.csv", resumed);

  const int spe = steps_per_epoch(tc, train_vols.size());
  const int last = opt.stop_after_epochs >= 0 ? std::min(tc.epochs, opt.stop_after_epochs) : tc.epochs;
  const double inv_accum = 1.0 / tc.grad_accum;

  for (int epoch = st.epoch; epoch < last; ++epoch) {
    const double lr = epoch_lr(tc, epoch);
    std::vector<std::size_t> order(train_vols.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (int s = 0; s < spe; ++s) {
      adam.zero_grad();
      double step_loss = 0.0;
      for (int m = 0; m < tc.grad_accum; ++m) {
        const auto& v = train_vols[order[static_cast<std::size_t>(s * tc.grad_accum + m) % order.size()]];
        const ag::Var loss =
            ssim_loss(model.forward(ag::Var::constant(v.recon), v.lc->record.kspace.axis_meaning), v.lc->record.target);
        check_finite(loss.item(), "stage2 loss", epoch, st.step);
        ag::backward(tc.grad_accum > 1 ? ag::scale(loss, inv_accum) : loss);
        step_loss += loss.item() * inv_accum;
      }
      check_finite(adam.step(lr), "stage2 gradient norm", epoch, st.step);
      ++st.step;
      st.loss_history.push_back(step_loss);
      epoch_loss += step_loss;
    }

    EpochLog e;
    e.epoch = epoch + 1;
    e.lr = lr;
    e.train_loss = epoch_loss / spe;
    e.val = summarize(score_stage2(model, val_vols, false));
    e.best = val.empty() || e.val.ssim > st.best_val_ssim;
    if (e.best) {
      st.best_val_ssim = val.empty() ? st.best_val_ssim : e.val.ssim;
      info["epoch"] = e.epoch;
      info["val_ssim"] = e.val.ssim;
      save_stage2(out.checkpoint, model, info);
    }
    st.epoch = epoch + 1;
    st.rng_state = serialize_rng(rng);
    save_train_state(dir / "state", st, model.params(), adam);
    log.add(e);
    spdlog::info("stage2 epoch {}/{}: loss {:.5f}, val ssim {:.4f} psnr {:.2f}{}", e.epoch, tc.epochs, e.train_loss,
                 e.val.ssim, e.val.psnr, e.best ? " *" : "");
    out.epochs.push_back(e);
  }
  out.step_losses = st.loss_history;
  out.best_val_ssim = st.best_val_ssim;
  return out;
}

// ---- inference -----------------------------------------------------------------------

std::vector<fs::path> cmd_reconstruct(const ReconConfig& cfg, const ReconstructOptions& opt) {
  cfg.validate();
  const UnrolledModel stage1 = load_stage1(opt.stage1_checkpoint);
  std::optional<Refiner> stage2;
  if (opt.stage2_checkpoint) stage2.emplace(load_stage2(*opt.stage2_checkpoint));

  std::vector<std::pair<std::string, fs::path>> inputs;
  if (opt.cases.empty()) {
    for (const auto& e : read_splits(cfg.data_dir).select("test", cfg.task))
      inputs.emplace_back(e.id, case_dir(cfg.data_dir, e.id));
  } else {
    for (const auto& p : opt.cases) inputs.emplace_back(p.filename().string(), p);
  }
  if (inputs.empty()) throw DataError("nothing to reconstruct");

  const fs::path out_dir = opt.out_dir.empty() ? cfg.run_dir / "recon" : opt.out_dir;
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& [id, path] : inputs) {
    const CaseRecord rec = read_case(path);
    for (int acc : cfg.accelerations) {
      const UndersampleMask mask = eval_mask(cfg, id, acc);
      const KSpaceVolume y = apply_mask(rec.kspace, mask);
      const RealArray s1 = reconstruct_stage1(stage1, y, mask);

      Container c = case_container(rec);
      c.kind = "reconstruction";
      c.put("kspace", y.data, {"frame", "coil", "ky", "kx"});
      c.put("zero_filled", zero_filled(y), {"frame", "ky", "kx"});
      c.put("recon_stage1", s1, {"frame", "ky", "kx"});
      RealArray m({mask.ky()});
      for (std::size_t i = 0; i < mask.ky(); ++i) m[i] = mask.keep[i];
      c.put("mask", m, {"ky"});
      std::vector<std::string> stages{"zero_filled", "stage1"};
      if (stage2) {
        c.put("recon_stage2", refine(*stage2, s1, rec.kspace.axis_meaning), {"frame", "ky", "kx"});
        stages.push_back("stage2");
        c.meta["stage2_checkpoint"] = fs::absolute(*opt.stage2_checkpoint).string();
      }
      c.meta["case_id"] = id;
      c.meta["task"] = to_string(rec.kspace.axis_meaning);
      c.meta["acceleration"] = acc;
      c.meta["acs_lines"] = mask.acs_lines;
      c.meta["stages"] = stages;
      c.meta["family"] = to_string(stage1.config().family);
      c.meta["stage1_checkpoint"] = fs::absolute(opt.stage1_checkpoint).string();

      const fs::path dir = out_dir / (id + "_x" + std::to_string(acc));
      write_container(c, dir);
      written.push_back(dir);
      spdlog::info("reconstructed {} at x{}", id, acc);
    }
  }
  return written;
}

std::vector<MetricRow> cmd_evaluate(const ReconConfig& cfg, const fs::path& recon_dir, const fs::path& report_csv) {
  (void)cfg;
  if (!fs::is_directory(recon_dir)) throw DataError("no reconstructions at " + recon_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& d : fs::directory_iterator(recon_dir)) {
    if (d.is_directory() && fs::exists(d.path() / "manifest.json")) dirs.push_back(d.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no reconstructions at " + recon_dir.string());

  std::vector<MetricRow> rows;
  for (const auto& d : dirs) {
    const Container c = read_container(d, kCaseMagic);
    if (c.kind != "reconstruction") continue;
    const RealArray& target = c.real("target");
    const std::string id = c.meta.value("case_id", d.filename().string());
    const std::string task = c.meta.value("task", std::string{});
    const int acc = c.meta.value("acceleration", 0);
    const std::string family = c.meta.value("family", std::string{"promptmr"});
    rows.push_back(evaluate_case(c.real("zero_filled"), target, id, task, acc, "zero_filled", "zero_filled"));
    rows.push_back(evaluate_case(c.real("recon_stage1"), target, id, task, acc, family, "stage1"));
    if (c.has("recon_stage2")) rows.push_back(evaluate_case(c.real("recon_stage2"), target, id, task, acc, family, "stage2"));
  }
  if (!report_csv.empty()) {
    if (report_csv.has_parent_path()) fs::create_directories(report_csv.parent_path());
    write_report_csv(rows, report_csv);
  }
  return rows;
}

std::vector<PromptEmbeddingRow> cmd_export_prompts(const ReconConfig& cfg, const fs::path& stage1_checkpoint,
                                                   const fs::path& csv, const std::string& split, int cascade) {
  cfg.validate();
  const UnrolledModel model = load_stage1(stage1_checkpoint);
  const auto cases = load_cases(cfg.data_dir, read_splits(cfg.data_dir).select(split, cfg.task));
  if (cases.empty()) throw DataError("no '" + split + "' cases to export");
  std::vector<EmbeddingInput> inputs;
  for (const auto& lc : cases) {
    for (int acc : cfg.accelerations) {
      for (std::size_t f = 0; f < lc.record.kspace.frames(); ++f) {
        inputs.push_back(EmbeddingInput{lc.entry.id, task_of(lc.entry.axis), &lc.record.kspace,
                                        eval_mask(cfg, lc.entry.id, acc), f});
      }
    }
  }
  auto rows = export_prompt_embeddings(model, inputs, cascade);
  if (!csv.empty()) {
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    write_prompt_csv(rows, csv);
  }
  return rows;
}

}  // namespace promptmr
