#pragma once

#include <string>
#include <vector>

#include "fetalsep/qrs.hpp"
#include "fetalsep/signal.hpp"

namespace fetalsep {

// Signal files are CSV with a "t,amplitude" header and 17 significant digits,
// plus a sidecar "<path>.json" holding fs, t0, label and the sample count.
void write_signal_csv(const std::string& path, const Signal& s);
Signal read_signal_csv(const std::string& path);

// {"fs": .., "indices": [..]}
void write_peaks_json(const std::string& path, const PeakList& peaks);
PeakList read_peaks_json(const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// %.17g, so values parse back to the same double
std::string format_double(double v);

}  // namespace fetalsep
