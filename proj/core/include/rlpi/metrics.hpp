#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace rlpi::metrics {

/// Percent of samples in [70,180], [50,70), <50, (180,250], >250, in that order.
struct Bands {
  double normo = 0.0;
  double mild_hypo = 0.0;
  double severe_hypo = 0.0;
  double mild_hyper = 0.0;
  double severe_hyper = 0.0;

  double sum() const { return normo + mild_hypo + severe_hypo + mild_hyper + severe_hyper; }
};

Bands band_percentages(const std::vector<double>& trace);

/// f(BG) = 1.509·((ln BG)^1.084 − 5.381).
double risk_transform(double bg);

struct RiskIndices {
  double lbgi = 0.0;
  double hbgi = 0.0;
};

RiskIndices lbgi_hbgi(const std::vector<double>& trace);

/// Sum of doses divided by the number of days.
double tdi(const std::vector<double>& doses, double days);

struct GlycaemicReport {
  double bg_mean = 0.0;
  double bg_min = 0.0;
  double bg_max = 0.0;
  Bands bands;
  double lbgi = 0.0;
  double hbgi = 0.0;
  double tdi = 0.0;

  static constexpr std::size_t kFields = 11;
  static const std::array<const char*, kFields>& field_names();
  std::array<double, kFields> values() const;
};

GlycaemicReport make_report(const std::vector<double>& glucose, const std::vector<double>& doses,
                            double days);

struct Aggregate {
  std::array<double, GlycaemicReport::kFields> mean{};
  std::array<double, GlycaemicReport::kFields> std{};
  std::size_t count = 0;
};

/// Per-field sample mean and sample standard deviation (n − 1). With a single
/// report the standard deviation is 0.
Aggregate cohort_aggregate(const std::vector<GlycaemicReport>& reports);

std::string report_to_json(const GlycaemicReport& r);
void write_report_csv_header(std::ostream& os, const std::string& key_column);
void write_report_csv_row(std::ostream& os, const std::string& key, const GlycaemicReport& r);

struct NamedAggregate {
  std::string name;
  Aggregate aggregate;
};

/// Markdown table with one row per aggregate in "mean ± std" format.
std::string aggregate_markdown(const std::vector<NamedAggregate>& rows);

}  // namespace rlpi::metrics
