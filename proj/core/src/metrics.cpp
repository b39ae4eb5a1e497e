#include "rlpi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rlpi/common.hpp"

namespace rlpi::metrics {

Bands band_percentages(const std::vector<double>& trace) {
  if (trace.empty()) throw PreconditionError("band_percentages: empty trace");
  std::array<std::size_t, 5> counts{};
  for (double v : trace) {
    if (v >= 70.0 && v <= 180.0) {
      ++counts[0];
    } else if (v >= 50.0 && v < 70.0) {
      ++counts[1];
    } else if (v < 50.0) {
      ++counts[2];
    } else if (v <= 250.0) {
      ++counts[3];
    } else {
      ++counts[4];
    }
  }
  const double n = static_cast<double>(trace.size());
  return {100.0 * counts[0] / n, 100.0 * counts[1] / n, 100.0 * counts[2] / n,
          100.0 * counts[3] / n, 100.0 * counts[4] / n};
}

double risk_transform(double bg) {
  if (!(bg > 0.0)) throw PreconditionError("risk transform needs positive glucose");
  return 1.509 * (std::pow(std::log(bg), 1.084) - 5.381);
}

RiskIndices lbgi_hbgi(const std::vector<double>& trace) {
  if (trace.empty()) throw PreconditionError("lbgi_hbgi: empty trace");
  RiskIndices out;
  for (double v : trace) {
    const double f = risk_transform(v);
    const double risk = 10.0 * f * f;
    if (f < 0.0) {
      out.lbgi += risk;
    } else if (f > 0.0) {
      out.hbgi += risk;
    }
  }
  out.lbgi /= static_cast<double>(trace.size());
  out.hbgi /= static_cast<double>(trace.size());
  return out;
}

double tdi(const std::vector<double>& doses, double days) {
  if (!(days > 0.0)) throw PreconditionError("tdi: days must be positive");
  double sum = 0.0;
  for (double d : doses) sum += d;
  return sum / days;
}

const std::array<const char*, GlycaemicReport::kFields>& GlycaemicReport::field_names() {
  static const std::array<const char*, kFields> names{
      "bg_mean", "bg_min",       "bg_max", "tir_70_180", "hypo_50_70", "hypo_below_50",
      "hyper_180_250", "hyper_above_250", "lbgi", "hbgi", "tdi"};
  return names;
}

std::array<double, GlycaemicReport::kFields> GlycaemicReport::values() const {
  return {bg_mean,          bg_min, bg_max, bands.normo, bands.mild_hypo, bands.severe_hypo,
          bands.mild_hyper, bands.severe_hyper, lbgi, hbgi, tdi};
}

GlycaemicReport make_report(const std::vector<double>& glucose, const std::vector<double>& doses,
                            double days) {
  GlycaemicReport r;
  r.bands = band_percentages(glucose);
  const auto [lo, hi] = std::minmax_element(glucose.begin(), glucose.end());
  r.bg_min = *lo;
  r.bg_max = *hi;
  double sum = 0.0;
  for (double v : glucose) sum += v;
  r.bg_mean = sum / static_cast<double>(glucose.size());
  const RiskIndices risk = lbgi_hbgi(glucose);
  r.lbgi = risk.lbgi;
  r.hbgi = risk.hbgi;
  r.tdi = tdi(doses, days);
  return r;
}

Aggregate cohort_aggregate(const std::vector<GlycaemicReport>& reports) {
  if (reports.empty()) throw PreconditionError("cohort_aggregate: no reports");
  Aggregate agg;
  agg.count = reports.size();
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    const auto v = r.values();
    for (std::size_t k = 0; k < v.size(); ++k) agg.mean[k] += v[k];
  }
  for (double& m : agg.mean) m /= n;
  if (reports.size() >= 2) {
    for (const auto& r : reports) {
      const auto v = r.values();
      for (std::size_t k = 0; k < v.size(); ++k) agg.std[k] += (v[k] - agg.mean[k]) * (v[k] - agg.mean[k]);
    }
    for (double& s : agg.std) s = std::sqrt(s / (n - 1.0));
  }
  return agg;
}

std::string report_to_json(const GlycaemicReport& r) {
  nlohmann::ordered_json j;
  const auto v = r.values();
  const auto& names = GlycaemicReport::field_names();
  for (std::size_t k = 0; k < v.size(); ++k) j[names[k]] = v[k];
  return j.dump(2);
}

void write_report_csv_header(std::ostream& os, const std::string& key_column) {
  os << key_column;
  for (const char* name : GlycaemicReport::field_names()) os << ',' << name;
  os << '\n';
}

void write_report_csv_row(std::ostream& os, const std::string& key, const GlycaemicReport& r) {
  os << key;
  for (double v : r.values()) os << fmt::format(",{}", v);
  os << '\n';
}

std::string aggregate_markdown(const std::vector<NamedAggregate>& rows) {
  static const std::array<const char*, GlycaemicReport::kFields> headers{
      "BG mean", "BG min", "BG max", "% [70,180]", "% [50,70)", "% <50",
      "% (180,250]", "% >250", "LBGI", "HBGI", "TDI U/day"};
  std::string out = "| |";
  for (const char* h : headers) out += fmt::format(" {} |", h);
  out += "\n|---|";
  for (std::size_t k = 0; k < headers.size(); ++k) out += "---|";
  out += '\n';
  for (const auto& row : rows) {
    out += fmt::format("| {} (n={}) |", row.name, row.aggregate.count);
    for (std::size_t k = 0; k < headers.size(); ++k) {
      out += fmt::format(" {:.2f} ± {:.2f} |", row.aggregate.mean[k], row.aggregate.std[k]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace rlpi::metrics
