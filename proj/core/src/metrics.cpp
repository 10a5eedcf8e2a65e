#include "promptmr/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "promptmr/ops.hpp"

namespace promptmr {

namespace {

void require_match(const RealArray& a, const RealArray& b, const char* who) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(who) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

double nmse(const RealArray& pred, const RealArray& target) {
  require_match(pred, target, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - target[i]) * (pred[i] - target[i]);
    den += target[i] * target[i];
  }
  if (den == 0.0) throw DataError("nmse: target is identically zero");
  return num / den;
}

double psnr(const RealArray& pred, const RealArray& target) {
  require_match(pred, target, "psnr");
  if (target.empty()) throw DataError("psnr: empty input");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) mse += (pred[i] - target[i]) * (pred[i] - target[i]);
  mse /= static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(target.vec().begin(), target.vec().end());
  return 10.0 * std::log10(peak * peak / mse);
}

ag::Var ssim_loss(const ag::Var& pred, const RealArray& target, const SsimOptions& opt) {
  const Shape& s = pred.shape();
  if (s != target.shape() || (s.size() != 2 && s.size() != 3)) {
    throw ShapeError("ssim: expected matching [F,H,W] or [H,W], got " + shape_str(s) + " vs " + shape_str(target.shape()));
  }
  const std::size_t F = s.size() == 3 ? s[0] : 1, H = s[s.size() - 2], W = s[s.size() - 1];
  if (H < static_cast<std::size_t>(opt.window) || W < static_cast<std::size_t>(opt.window)) {
    throw ShapeError("ssim: image " + shape_str(s) + " smaller than the " + std::to_string(opt.window) + "x" +
                     std::to_string(opt.window) + " window");
  }
  const double range = opt.data_range ? *opt.data_range : *std::max_element(target.vec().begin(), target.vec().end());
  const double c1 = (opt.k1 * range) * (opt.k1 * range);
  const double c2 = (opt.k2 * range) * (opt.k2 * range);
  const double np = static_cast<double>(opt.window * opt.window);
  const double cov_norm = np / (np - 1.0);

  using namespace ag;
  const Shape img{F, 1, H, W};
  Var X = reshape(pred, img);
  Var Y = Var::constant(img, target.vec());
  const int k = opt.window;
  Var ux = box_filter(X, k), uy = box_filter(Y, k);
  Var uxx = box_filter(mul(X, X), k), uyy = box_filter(mul(Y, Y), k), uxy = box_filter(mul(X, Y), k);
  Var vx = scale(sub(uxx, mul(ux, ux)), cov_norm);
  Var vy = scale(sub(uyy, mul(uy, uy)), cov_norm);
  Var vxy = scale(sub(uxy, mul(ux, uy)), cov_norm);
  Var a1 = add_scalar(scale(mul(ux, uy), 2.0), c1);
  Var a2 = add_scalar(scale(vxy, 2.0), c2);
  Var b1 = add_scalar(add(mul(ux, ux), mul(uy, uy)), c1);
  Var b2 = add_scalar(add(vx, vy), c2);
  Var smap = div(mul(a1, a2), mul(b1, b2));
  // Equal window counts per frame, so the global mean is the mean of frame means.
  return add_scalar(scale(mean(smap), -1.0), 1.0);
}

double ssim(const RealArray& pred, const RealArray& target, const SsimOptions& opt) {
  ag::NoGradGuard guard;
  return 1.0 - ssim_loss(ag::Var::constant(pred), target, opt).item();
}

MetricRow evaluate_case(const RealArray& pred, const RealArray& target, std::string case_id, std::string task, int accel,
                        std::string model, std::string stage) {
  MetricRow r{std::move(case_id), std::move(task), accel, std::move(model), std::move(stage), 0, 0, 0};
  r.nmse = nmse(pred, target);
  r.psnr = psnr(pred, target);
  r.ssim = ssim(pred, target);
  return r;
}

std::vector<MetricAggregate> aggregate(const std::vector<MetricRow>& rows) {
  using Key = std::tuple<std::string, int, std::string, std::string>;
  std::map<Key, MetricAggregate> groups;
  std::map<Key, std::size_t> finite_psnr;
  for (const auto& r : rows) {
    Key key{r.task, r.accel, r.model, r.stage};
    auto& g = groups[key];
    g.task = r.task;
    g.accel = r.accel;
    g.model = r.model;
    g.stage = r.stage;
    ++g.cases;
    g.nmse += r.nmse;
    g.ssim += r.ssim;
    if (std::isfinite(r.psnr)) {
      g.psnr += r.psnr;
      ++finite_psnr[key];
    } else {
      ++g.psnr_excluded;
      spdlog::warn("psnr for case '{}' ({}) is infinite; excluded from the mean", r.case_id, r.stage);
    }
  }
  std::vector<MetricAggregate> out;
  for (auto& [key, g] : groups) {
    g.nmse /= static_cast<double>(g.cases);
    g.ssim /= static_cast<double>(g.cases);
    const std::size_t nf = finite_psnr[key];
    g.psnr = nf ? g.psnr / static_cast<double>(nf) : std::numeric_limits<double>::infinity();
    out.push_back(g);
  }
  return out;
}

void write_report_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write report " + path.string());
  os << "case,task,accel,model,stage,nmse,psnr,ssim\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.case_id << ',' << r.task << ',' << r.accel << ',' << r.model << ',' << r.stage << ',' << r.nmse << ',';
    if (std::isfinite(r.psnr))
      os << r.psnr;
    else
      os << "inf";
    os << ',' << r.ssim << '\n';
  }
}

std::vector<MetricRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read report " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "case,task,accel,model,stage,nmse,psnr,ssim") throw FormatError("header", "unexpected CSV header");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw FormatError("row", "expected 8 columns: " + line);
    MetricRow r;
    r.case_id = f[0];
    r.task = f[1];
    r.accel = std::stoi(f[2]);
    r.model = f[3];
    r.stage = f[4];
    r.nmse = std::stod(f[5]);
    r.psnr = f[6] == "inf" ? std::numeric_limits<double>::infinity() : std::stod(f[6]);
    r.ssim = std::stod(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_report_table(const std::vector<MetricAggregate>& agg) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "task" << std::setw(7) << "accel" << std::setw(16) << "model" << std::setw(12)
     << "stage" << std::setw(7) << "cases" << "NMSE(x1e-2)/PSNR/SSIM\n";
  for (const auto& g : agg) {
    os << std::left << std::setw(10) << g.task << std::setw(7) << ("x" + std::to_string(g.accel)) << std::setw(16)
       << g.model << std::setw(12) << g.stage << std::setw(7) << g.cases << std::fixed << std::setprecision(2)
       << g.nmse * 100.0 << "/" << g.psnr << "/" << std::setprecision(4) << g.ssim << "\n";
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

}  // namespace promptmr
