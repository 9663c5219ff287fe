#pragma once

#include <string>

#include "pease/metrics.hpp"

namespace pease {

void write_report_json(const std::string& path, const MetricReport& report);
MetricReport read_report_json(const std::string& path);

// Table-1-style text rendering: anechoic vs reverberant column groups,
// Unprocessed baseline row plus the model row when present.
std::string render_table(const MetricReport& report);

// SNR- and T60-stratified line plots (SI-SDR and STOI) as standalone SVGs.
void write_snr_plot(const std::string& path, const MetricReport& report);
void write_t60_plot(const std::string& path, const MetricReport& report);

}  // namespace pease
