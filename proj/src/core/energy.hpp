#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "core/sensor.hpp"

namespace cisskip {

// Front-end energy coefficients. Per-pixel energies are normalized so that
// one conventional pixel read costs e_sense_r + e_adc_r = 1. Frame-level
// overheads (mask memory, chip-to-chip communication, mask generator) are
// fractions of one full-frame conventional read, which keeps results
// independent of the pixel count.
struct EnergyParams {
  double e_sense_r = 0.5;
  double e_adc_r = 0.5;
  // Per skipped pixel in a fully gated row (row driver, ramp+counter and
  // comparators/latches all off via S1-S3).
  double e_sense_s_row = 0.0862069;
  double e_adc_s_row = 0.0862069;
  // Per skipped pixel inside an active row (only comparator+latch gated;
  // ramp and counter keep running).
  double e_sense_s_reg = 0.17295597;
  double e_adc_s_reg = 0.17295597;
  // Frame overheads as fractions of a full-frame read.
  double e_mem_frac = 0.005;
  double e_com_frac = 0.005;
  double e_mgn_frac = 0.0;

  double read_px() const { return e_sense_r + e_adc_r; }
  double skip_px_row() const { return e_sense_s_row + e_adc_s_row; }
  double skip_px_reg() const { return e_sense_s_reg + e_adc_s_reg; }
  double alpha_row() const { return skip_px_row() / read_px(); }
  double alpha_reg() const { return skip_px_reg() / read_px(); }

  void set_alpha_row(double alpha);
  void set_alpha_reg(double alpha);

  // Nonnegative coefficients; skip energies no higher than read energies;
  // row-skip gating covers a superset of region-skip gating, so
  // skip_px_row() <= skip_px_reg().
  void validate() const;

  nlohmann::json to_json() const;
  static EnergyParams from_json(const nlohmann::json& j);
};

// Per-frame energy of a masked read, from actual activation
// counts: E_mem + E_com + (e_sense_r + e_adc_r) * n_px_read
//                       + (e_sense_s + e_adc_s) * n_px_skip,
// where pixels in fully gated rows use the row-skip coefficients and pixels
// skipped inside active rows use the region-skip ones. Result is in
// pixel-read units.
double mode_energy(const ReadoutLedger& ledger, const EnergyParams& params, SensorMode mode);

// Average frame energy over one period:
// (e_base + e_mem + (P-1) * e_mode) / P + e_mgn.
double average_energy(double e_base, double e_mem, double e_mode, int period, double e_mgn);

// Closed-form normalized energy at skip ratio s, relative to the standard
// baseline at s = 0, P = 1. Works in full-frame-read units (R = 1).
double normalized_energy(double skip_ratio, SensorMode mode, int period,
                         const EnergyParams& params);

struct EnergyReport {
  SensorMode mode = SensorMode::standard;
  double skip_ratio = 0.0;
  int period = 1;
  double e_mode = 0.0;      // masked-frame energy, full-frame-read units
  double e_avg = 0.0;       // period-average energy, full-frame-read units
  double normalized = 1.0;  // e_avg / (baseline at s=0, P=1)
  double reduction_pct = 0.0;
};

// Closed-form report for one operating point.
EnergyReport energy_report(double skip_ratio, SensorMode mode, int period,
                           const EnergyParams& params);

// ---- calibration ----

struct CalibrationTarget {
  std::string label;
  SensorMode mode = SensorMode::row_skip;
  double skip_ratio = 0.0;
  int period = 1;
  double target_reduction = 0.0;  // e.g. 0.46 for a 46% reduction
};

enum class FreeParam { alpha_row, alpha_reg, e_mem, e_com, e_mgn };

FreeParam free_param_from_string(const std::string& s);
std::string to_string(FreeParam p);

struct CalibrationResult {
  EnergyParams params;
  std::vector<double> residuals;  // model reduction - target, per target
  double rss = 0.0;
  int iterations = 0;
};

// Least-squares fit of the free parameters to the target reductions, by
// coordinate descent with a golden-section line search per parameter.
// Stops when the residual sum of squares changes by less than 1e-6.
// Infeasible targets surface as irreducible residuals.
CalibrationResult calibrate(const std::vector<CalibrationTarget>& targets,
                            const std::vector<FreeParam>& free_params,
                            const EnergyParams& start);

// Closed-form single-target inversion for a skip coefficient with zero
// overheads; the independent anchor for calibrate().
double invert_alpha(double skip_ratio, int period, double target_reduction);

// The reductions reported for BDD100K (row), ImageNetVID (row) and
// OpenEDS (region) with their operating points.
std::vector<CalibrationTarget> reported_reduction_targets();

// ---- sweeps ----

struct SweepRow {
  SensorMode mode;
  double skip_ratio;
  int period;
  double e_mode;
  double e_avg;
  double normalized;
  double reduction_pct;
};

std::vector<SweepRow> sweep(const std::vector<double>& skip_grid,
                            const std::vector<int>& period_grid,
                            const std::vector<SensorMode>& modes, const EnergyParams& params);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace cisskip
