#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "promptmr/autograd.hpp"
#include "promptmr/ndarray.hpp"

namespace promptmr {

struct SsimOptions {
  int window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  /// Defaults to max(target) over the whole volume.
  std::optional<double> data_range;
};

/// ||pred - target||^2 / ||target||^2. Throws DataError for an all-zero target.
double nmse(const RealArray& pred, const RealArray& target);

/// 10 log10(max(target)^2 / mse); +infinity when pred == target.
double psnr(const RealArray& pred, const RealArray& target);

/// Mean local SSIM with a uniform window (sample covariance, "valid" windows),
/// computed per frame for [F,H,W] inputs and averaged. [H,W] is one frame.
double ssim(const RealArray& pred, const RealArray& target, const SsimOptions& opt = {});

/// 1 - ssim, differentiable in `pred` ([F,H,W] or [H,W]).
ag::Var ssim_loss(const ag::Var& pred, const RealArray& target, const SsimOptions& opt = {});

struct MetricRow {
  std::string case_id;
  std::string task;
  int accel = 0;
  std::string model;
  std::string stage;
  double nmse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricAggregate {
  std::string task;
  int accel = 0;
  std::string model;
  std::string stage;
  std::size_t cases = 0;
  double nmse = 0.0;
  double psnr = 0.0;  ///< mean over finite entries
  double ssim = 0.0;
  std::size_t psnr_excluded = 0;
};

MetricRow evaluate_case(const RealArray& pred, const RealArray& target, std::string case_id, std::string task, int accel,
                        std::string model, std::string stage);

/// Means grouped by (task, accel, model, stage); output order is sorted by key.
std::vector<MetricAggregate> aggregate(const std::vector<MetricRow>& rows);

/// CSV with header: case,task,accel,model,stage,nmse,psnr,ssim
void write_report_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);
std::vector<MetricRow> read_report_csv(const std::filesystem::path& path);

/// Human-readable table, NMSE shown x1e-2.
std::string format_report_table(const std::vector<MetricAggregate>& agg);

}  // namespace promptmr
