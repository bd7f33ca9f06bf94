#include "core/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cisskip {

void EnergyParams::set_alpha_row(double alpha) {
  e_sense_s_row = 0.5 * alpha * read_px();
  e_adc_s_row = 0.5 * alpha * read_px();
}

void EnergyParams::set_alpha_reg(double alpha) {
  e_sense_s_reg = 0.5 * alpha * read_px();
  e_adc_s_reg = 0.5 * alpha * read_px();
}

void EnergyParams::validate() const {
  const double fields[] = {e_sense_r,     e_adc_r,      e_sense_s_row, e_adc_s_row, e_sense_s_reg,
                           e_adc_s_reg,   e_mem_frac,   e_com_frac,    e_mgn_frac};
  for (double f : fields) {
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw ConfigError("energy params: coefficients must be finite and nonnegative");
    }
  }
  if (read_px() <= 0.0) throw ConfigError("energy params: read energy must be positive");
  if (skip_px_row() > read_px() || skip_px_reg() > read_px()) {
    throw ConfigError("energy params: skip-mode energy exceeds read energy");
  }
  if (skip_px_row() > skip_px_reg() + 1e-15) {
    throw ConfigError(
        "energy params: row-skip per-pixel energy must not exceed region-skip "
        "(row gating covers S1-S3, region gating only S3)");
  }
}

nlohmann::json EnergyParams::to_json() const {
  return {{"e_sense_r", e_sense_r},
          {"e_adc_r", e_adc_r},
          {"e_sense_s_row", e_sense_s_row},
          {"e_adc_s_row", e_adc_s_row},
          {"e_sense_s_reg", e_sense_s_reg},
          {"e_adc_s_reg", e_adc_s_reg},
          {"e_mem_frac", e_mem_frac},
          {"e_com_frac", e_com_frac},
          {"e_mgn_frac", e_mgn_frac}};
}

EnergyParams EnergyParams::from_json(const nlohmann::json& j) {
  try {
    EnergyParams p;
    p.e_sense_r = j.at("e_sense_r").get<double>();
    p.e_adc_r = j.at("e_adc_r").get<double>();
    p.e_sense_s_row = j.at("e_sense_s_row").get<double>();
    p.e_adc_s_row = j.at("e_adc_s_row").get<double>();
    p.e_sense_s_reg = j.at("e_sense_s_reg").get<double>();
    p.e_adc_s_reg = j.at("e_adc_s_reg").get<double>();
    p.e_mem_frac = j.at("e_mem_frac").get<double>();
    p.e_com_frac = j.at("e_com_frac").get<double>();
    p.e_mgn_frac = j.at("e_mgn_frac").get<double>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("energy params json: ") + e.what());
  }
}

double mode_energy(const ReadoutLedger& ledger, const EnergyParams& params, SensorMode mode) {
  (void)mode;  // the ledger already separates the two skip classes
  const int64_t px = ledger.px_total();
  if (px <= 0) throw StateError("mode_energy: empty ledger");
  if (ledger.px_read < 0 || ledger.px_skip_in_active_row < 0 ||
      ledger.px_skip_in_gated_row < 0) {
    throw StateError("mode_energy: negative pixel counters");
  }
  const double frame_read = static_cast<double>(px) * params.read_px();
  return params.e_mem_frac * frame_read + params.e_com_frac * frame_read +
         params.read_px() * static_cast<double>(ledger.px_read) +
         params.skip_px_row() * static_cast<double>(ledger.px_skip_in_gated_row) +
         params.skip_px_reg() * static_cast<double>(ledger.px_skip_in_active_row);
}

double average_energy(double e_base, double e_mem, double e_mode, int period, double e_mgn) {
  if (period < 1) throw RangeError("average_energy: period must be >= 1");
  return (e_base + e_mem + (period - 1) * e_mode) / period + e_mgn;
}

double normalized_energy(double skip_ratio, SensorMode mode, int period,
                         const EnergyParams& params) {
  if (!(skip_ratio >= 0.0 && skip_ratio <= 1.0)) {
    throw RangeError("normalized_energy: skip ratio " + std::to_string(skip_ratio) +
                     " outside [0,1]");
  }
  if (period < 1) throw RangeError("normalized_energy: period must be >= 1");
  double alpha;
  switch (mode) {
    case SensorMode::row_skip: alpha = params.alpha_row(); break;
    case SensorMode::region_skip: alpha = params.alpha_reg(); break;
    default: throw ConfigError("normalized_energy: mode must be row or region skip");
  }
  // Full-frame-read units: the s = 0 pixel cost is 1.
  const double e_mode =
      params.e_mem_frac + params.e_com_frac + (1.0 - skip_ratio) + skip_ratio * alpha;
  const double e_avg = average_energy(1.0, params.e_mem_frac, e_mode, period, params.e_mgn_frac);
  const double baseline = 1.0 + params.e_mem_frac + params.e_mgn_frac;
  return e_avg / baseline;
}

EnergyReport energy_report(double skip_ratio, SensorMode mode, int period,
                           const EnergyParams& params) {
  EnergyReport r;
  r.mode = mode;
  r.skip_ratio = skip_ratio;
  r.period = period;
  double alpha = mode == SensorMode::row_skip ? params.alpha_row() : params.alpha_reg();
  r.e_mode = params.e_mem_frac + params.e_com_frac + (1.0 - skip_ratio) + skip_ratio * alpha;
  r.e_avg = average_energy(1.0, params.e_mem_frac, r.e_mode, period, params.e_mgn_frac);
  r.normalized = normalized_energy(skip_ratio, mode, period, params);
  r.reduction_pct = (1.0 - r.normalized) * 100.0;
  return r;
}

FreeParam free_param_from_string(const std::string& s) {
  if (s == "alpha_row") return FreeParam::alpha_row;
  if (s == "alpha_reg") return FreeParam::alpha_reg;
  if (s == "e_mem") return FreeParam::e_mem;
  if (s == "e_com") return FreeParam::e_com;
  if (s == "e_mgn") return FreeParam::e_mgn;
  throw ConfigError("unknown free parameter '" + s + "'");
}

std::string to_string(FreeParam p) {
  switch (p) {
    case FreeParam::alpha_row: return "alpha_row";
    case FreeParam::alpha_reg: return "alpha_reg";
    case FreeParam::e_mem: return "e_mem";
    case FreeParam::e_com: return "e_com";
    case FreeParam::e_mgn: return "e_mgn";
  }
  return "?";
}

namespace {

double get_free(const EnergyParams& p, FreeParam f) {
  switch (f) {
    case FreeParam::alpha_row: return p.alpha_row();
    case FreeParam::alpha_reg: return p.alpha_reg();
    case FreeParam::e_mem: return p.e_mem_frac;
    case FreeParam::e_com: return p.e_com_frac;
    case FreeParam::e_mgn: return p.e_mgn_frac;
  }
  return 0.0;
}

void set_free(EnergyParams& p, FreeParam f, double v) {
  switch (f) {
    case FreeParam::alpha_row: p.set_alpha_row(v); break;
    case FreeParam::alpha_reg: p.set_alpha_reg(v); break;
    case FreeParam::e_mem: p.e_mem_frac = v; break;
    case FreeParam::e_com: p.e_com_frac = v; break;
    case FreeParam::e_mgn: p.e_mgn_frac = v; break;
  }
}

double residual_sum(const std::vector<CalibrationTarget>& targets, const EnergyParams& params) {
  double rss = 0.0;
  for (const CalibrationTarget& t : targets) {
    double model = 1.0 - normalized_energy(t.skip_ratio, t.mode, t.period, params);
    double r = model - t.target_reduction;
    rss += r * r;
  }
  return rss;
}

// Golden-section minimum of fn on [lo, hi]; fn is unimodal per coordinate
// (each reduction is monotone in each coefficient). Endpoints are compared
// too so boundary optima are exact.
template <typename Fn>
double golden_min(Fn&& fn, double lo, double hi, double tol) {
  constexpr double inv_phi = 0.61803398874989484820;
  double a = lo, b = hi;
  double c = b - (b - a) * inv_phi;
  double d = a + (b - a) * inv_phi;
  double fc = fn(c), fd = fn(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - (b - a) * inv_phi;
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + (b - a) * inv_phi;
      fd = fn(d);
    }
  }
  double mid = 0.5 * (a + b);
  double best = mid, fbest = fn(mid);
  if (fn(lo) < fbest) {
    best = lo;
    fbest = fn(lo);
  }
  if (fn(hi) < fbest) best = hi;
  return best;
}

}  // namespace

double invert_alpha(double skip_ratio, int period, double target_reduction) {
  if (period < 2) throw RangeError("invert_alpha: period must be >= 2");
  if (!(skip_ratio > 0.0 && skip_ratio <= 1.0)) {
    throw RangeError("invert_alpha: skip ratio must be in (0,1]");
  }
  // With zero overheads: 1 - red = (1 + (P-1)(1 - s + s*alpha)) / P.
  double per_frame = (period * (1.0 - target_reduction) - 1.0) / (period - 1);
  return (per_frame - (1.0 - skip_ratio)) / skip_ratio;
}

CalibrationResult calibrate(const std::vector<CalibrationTarget>& targets,
                            const std::vector<FreeParam>& free_params,
                            const EnergyParams& start) {
  if (targets.empty()) throw ConfigError("calibrate: need at least one target");
  for (const CalibrationTarget& t : targets) {
    if (t.mode == SensorMode::standard) {
      throw ConfigError("calibrate: targets must use a skip mode");
    }
    if (t.period < 1) throw RangeError("calibrate: period must be >= 1");
  }

  EnergyParams params = start;
  double rss = residual_sum(targets, params);
  int iterations = 0;
  for (int outer = 0; outer < 200; ++outer) {
    ++iterations;
    double prev = rss;
    for (FreeParam f : free_params) {
      double lo = 0.0, hi = 1.0;
      // Keep the fitted point inside the type invariant alpha_row <= alpha_reg.
      if (f == FreeParam::alpha_row) hi = params.alpha_reg();
      if (f == FreeParam::alpha_reg) lo = params.alpha_row();
      if (f == FreeParam::e_mem || f == FreeParam::e_com || f == FreeParam::e_mgn) hi = 0.5;
      auto objective = [&](double v) {
        EnergyParams trial = params;
        set_free(trial, f, v);
        return residual_sum(targets, trial);
      };
      double best = golden_min(objective, lo, hi, 1e-10);
      set_free(params, f, best);
    }
    rss = residual_sum(targets, params);
    if (std::abs(prev - rss) < 1e-6 || rss < 1e-18) break;
  }

  CalibrationResult result;
  result.params = params;
  result.params.validate();
  result.rss = rss;
  result.iterations = iterations;
  for (const CalibrationTarget& t : targets) {
    double model = 1.0 - normalized_energy(t.skip_ratio, t.mode, t.period, params);
    result.residuals.push_back(model - t.target_reduction);
  }
  return result;
}

std::vector<CalibrationTarget> reported_reduction_targets() {
  return {{"bdd_row", SensorMode::row_skip, 0.58, 24, 0.46},
          {"vid_row", SensorMode::row_skip, 0.65, 24, 0.53},
          {"eds_region", SensorMode::region_skip, 0.80, 160, 0.52}};
}

std::vector<SweepRow> sweep(const std::vector<double>& skip_grid,
                            const std::vector<int>& period_grid,
                            const std::vector<SensorMode>& modes, const EnergyParams& params) {
  if (skip_grid.empty() || period_grid.empty() || modes.empty()) {
    throw ConfigError("sweep: grids must be nonempty");
  }
  params.validate();
  std::vector<SweepRow> rows;
  rows.reserve(skip_grid.size() * period_grid.size() * modes.size());
  for (SensorMode mode : modes) {
    for (double s : skip_grid) {
      for (int p : period_grid) {
        EnergyReport r = energy_report(s, mode, p, params);
        rows.push_back({mode, s, p, r.e_mode, r.e_avg, r.normalized, r.reduction_pct});
      }
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "mode,s,P,E_F_mode,E_F,normalized,reduction_pct\n";
  char line[256];
  for (const SweepRow& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.6g,%d,%.9g,%.9g,%.9g,%.6g\n",
                  to_string(r.mode).c_str(), r.skip_ratio, r.period, r.e_mode, r.e_avg,
                  r.normalized, r.reduction_pct);
    out += line;
  }
  return out;
}

}  // namespace cisskip
