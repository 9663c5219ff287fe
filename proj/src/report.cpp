#include "pease/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace pease {

namespace {

json example_to_json(const ExampleMetrics& e) {
  json j{{"id", e.id},
         {"t60", e.t60},
         {"snr_db", e.snr_db},
         {"si_sdr_left", e.si_sdr_left},
         {"si_sdr_right", e.si_sdr_right},
         {"stoi_left", e.stoi_left},
         {"stoi_right", e.stoi_right},
         {"baseline_si_sdr_left", e.baseline_si_sdr_left},
         {"baseline_si_sdr_right", e.baseline_si_sdr_right},
         {"baseline_stoi_left", e.baseline_stoi_left},
         {"baseline_stoi_right", e.baseline_stoi_right},
         {"processed", e.processed}};
  if (e.error) j["error"] = *e.error;
  return j;
}

ExampleMetrics example_from_json(const json& j) {
  ExampleMetrics e;
  e.id = j.at("id");
  e.t60 = j.at("t60");
  e.snr_db = j.at("snr_db");
  e.si_sdr_left = j.at("si_sdr_left");
  e.si_sdr_right = j.at("si_sdr_right");
  e.stoi_left = j.at("stoi_left");
  e.stoi_right = j.at("stoi_right");
  e.baseline_si_sdr_left = j.at("baseline_si_sdr_left");
  e.baseline_si_sdr_right = j.at("baseline_si_sdr_right");
  e.baseline_stoi_left = j.at("baseline_stoi_left");
  e.baseline_stoi_right = j.at("baseline_stoi_right");
  e.processed = j.at("processed");
  if (j.contains("error")) e.error = j.at("error").get<std::string>();
  return e;
}

json stratum_to_json(const StratumStats& s) {
  return json{{"key", s.key},
              {"count", s.count},
              {"si_sdr", s.si_sdr},
              {"stoi", s.stoi},
              {"baseline_si_sdr", s.baseline_si_sdr},
              {"baseline_stoi", s.baseline_stoi}};
}

StratumStats stratum_from_json(const json& j) {
  StratumStats s;
  s.key = j.at("key");
  s.count = j.at("count");
  s.si_sdr = j.at("si_sdr");
  s.stoi = j.at("stoi");
  s.baseline_si_sdr = j.at("baseline_si_sdr");
  s.baseline_stoi = j.at("baseline_stoi");
  return s;
}

}  // namespace

void write_report_json(const std::string& path, const MetricReport& report) {
  json j;
  j["processed"] = report.processed;
  j["examples"] = json::array();
  for (const auto& e : report.examples) j["examples"].push_back(example_to_json(e));
  j["by_snr"] = json::array();
  for (const auto& s : report.by_snr) j["by_snr"].push_back(stratum_to_json(s));
  j["by_t60"] = json::array();
  for (const auto& s : report.by_t60) j["by_t60"].push_back(stratum_to_json(s));
  j["overall"] = stratum_to_json(report.overall);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path);
  out << j.dump(2) << "\n";
}

MetricReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report " + path);
  json j = json::parse(in);
  MetricReport r;
  r.processed = j.at("processed");
  for (const auto& e : j.at("examples")) r.examples.push_back(example_from_json(e));
  for (const auto& s : j.at("by_snr")) r.by_snr.push_back(stratum_from_json(s));
  for (const auto& s : j.at("by_t60")) r.by_t60.push_back(stratum_from_json(s));
  r.overall = stratum_from_json(j.at("overall"));
  return r;
}

std::string render_table(const MetricReport& report) {
  // Anechoic = t60 == 0 stratum; reverberant = mean over t60 > 0 strata.
  auto pick = [&](bool anechoic, bool baseline, bool want_stoi) {
    double sum = 0.0;
    int n = 0;
    for (const auto& s : report.by_t60) {
      if ((s.key == 0.0) != anechoic) continue;
      double v = baseline ? (want_stoi ? s.baseline_stoi : s.baseline_si_sdr)
                          : (want_stoi ? s.stoi : s.si_sdr);
      sum += v * s.count;
      n += s.count;
    }
    return n ? sum / n : std::nan("");
  };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "Model         |      Anechoic       |  Reverberant (T60)\n";
  os << "              |   SI-SDR     STOI   |   SI-SDR     STOI\n";
  os << "--------------+---------------------+---------------------\n";
  auto row = [&](const std::string& name, bool baseline) {
    os << std::left << std::setw(14) << name << "|" << std::right
       << std::setw(9) << pick(true, baseline, false) << std::setw(9)
       << pick(true, baseline, true) << "    |" << std::setw(9)
       << pick(false, baseline, false) << std::setw(9)
       << pick(false, baseline, true) << "\n";
  };
  row("Unprocessed", true);
  if (report.processed) row("PEASE-8", false);
  return os.str();
}

namespace {

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& x_label,
                    const std::vector<Series>& series) {
  if (series.empty() || series[0].points.empty())
    throw std::invalid_argument("plot: no data");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  const double pad_y = 0.08 * (ymax - ymin);
  ymin -= pad_y;
  ymax += pad_y;
  const int W = 640, H = 420, ML = 70, MR = 20, MT = 40, MB = 50;
  auto px = [&](double x) {
    return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
  };
  auto py = [&](double y) {
    return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);
  };

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
     << H << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' "
     << "font-family='sans-serif' font-size='16'>" << title << "</text>\n";
  os << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR
     << "' y2='" << H - MB << "' stroke='black'/>\n";
  os << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='"
     << H - MB << "' stroke='black'/>\n";
  os << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 12
     << "' text-anchor='middle' font-family='sans-serif' font-size='12'>"
     << x_label << "</text>\n";
  // y-axis ticks
  for (int i = 0; i <= 4; ++i) {
    double y = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x='" << ML - 8 << "' y='" << py(y) + 4
       << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
       << std::fixed << std::setprecision(2) << y << "</text>\n";
    os << "<line x1='" << ML - 4 << "' y1='" << py(y) << "' x2='" << ML
       << "' y2='" << py(y) << "' stroke='black'/>\n";
  }
  int li = 0;
  for (const auto& s : series) {
    os << "<polyline fill='none' stroke='" << s.color
       << "' stroke-width='2' points='";
    for (auto [x, y] : s.points) os << px(x) << "," << py(y) << " ";
    os << "'/>\n";
    for (auto [x, y] : s.points)
      os << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='3' fill='"
         << s.color << "'/>\n";
    os << "<text x='" << W - MR - 160 << "' y='" << MT + 16 * (li + 1)
       << "' font-family='sans-serif' font-size='12' fill='" << s.color << "'>"
       << s.label << "</text>\n";
    // x tick labels once
    if (li == 0)
      for (auto [x, y] : s.points)
        os << "<text x='" << px(x) << "' y='" << H - MB + 16
           << "' text-anchor='middle' font-family='sans-serif' "
              "font-size='11'>"
           << x << "</text>\n";
    ++li;
  }
  os << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot " + path);
  out << os.str();
}

std::vector<Series> strata_series(const std::vector<StratumStats>& strata,
                                  bool processed, bool want_stoi) {
  Series base{want_stoi ? "Unprocessed STOI" : "Unprocessed SI-SDR", "#888888", {}};
  Series model{want_stoi ? "PEASE-8 STOI" : "PEASE-8 SI-SDR", "#1f77b4", {}};
  for (const auto& s : strata) {
    base.points.push_back({s.key, want_stoi ? s.baseline_stoi : s.baseline_si_sdr});
    if (processed) model.points.push_back({s.key, want_stoi ? s.stoi : s.si_sdr});
  }
  std::vector<Series> out{base};
  if (processed) out.push_back(model);
  return out;
}

}  // namespace

void write_snr_plot(const std::string& path, const MetricReport& report) {
  if (report.by_snr.empty()) throw std::invalid_argument("empty report");
  auto base = path.substr(0, path.rfind('.'));
  write_line_svg(base + "_sisdr.svg", "SNR-stratified SI-SDR", "SNR (dB)",
                 strata_series(report.by_snr, report.processed, false));
  write_line_svg(base + "_stoi.svg", "SNR-stratified STOI", "SNR (dB)",
                 strata_series(report.by_snr, report.processed, true));
}

void write_t60_plot(const std::string& path, const MetricReport& report) {
  if (report.by_t60.empty()) throw std::invalid_argument("empty report");
  auto base = path.substr(0, path.rfind('.'));
  write_line_svg(base + "_sisdr.svg", "T60-stratified SI-SDR", "T60 (s)",
                 strata_series(report.by_t60, report.processed, false));
  write_line_svg(base + "_stoi.svg", "T60-stratified STOI", "T60 (s)",
                 strata_series(report.by_t60, report.processed, true));
}

}  // namespace pease
