#include "fetalsep/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fetalsep/error.hpp"

namespace fetalsep {

namespace fs = std::filesystem;
using Json = nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_signal_csv(const std::string& path, const Signal& s) {
  std::string text = "t,amplitude\n";
  text.reserve(s.size() * 44 + 16);
  for (std::size_t i = 0; i < s.size(); ++i) {
    text += format_double(s.t0 + static_cast<double>(i) / s.fs);
    text += ',';
    text += format_double(s.samples[i]);
    text += '\n';
  }
  write_text(path, text);
  const Json meta = {{"fs", s.fs}, {"t0", s.t0}, {"label", s.label}, {"samples", s.size()}};
  write_text(path + ".json", meta.dump(2) + "\n");
}

namespace {

double parse_number(std::string_view field, const std::string& path, std::size_t line) {
  while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::IoError, path + ":" + std::to_string(line) + ": not a number");
  }
  return v;
}

}  // namespace

Signal read_signal_csv(const std::string& path) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, path + ": empty file");
  if (line.rfind("t,amplitude", 0) != 0) throw Error(ErrorCode::IoError, path + ": expected a 't,amplitude' header");
  Signal s;
  std::vector<double> times;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::IoError, path + ":" + std::to_string(lineno) + ": missing comma");
    const std::string_view view(line);
    times.push_back(parse_number(view.substr(0, comma), path, lineno));
    s.samples.push_back(parse_number(view.substr(comma + 1), path, lineno));
  }
  if (s.samples.empty()) throw Error(ErrorCode::IoError, path + ": no samples");

  const std::string sidecar = path + ".json";
  if (fs::exists(sidecar)) {
    try {
      const Json meta = Json::parse(read_text(sidecar));
      s.fs = meta.at("fs").get<int>();
      s.t0 = meta.value("t0", times.front());
      s.label = meta.value("label", std::string());
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::IoError, sidecar + ": malformed metadata");
    }
  } else {
    if (times.size() < 2 || !(times[1] > times[0])) {
      throw Error(ErrorCode::IoError, path + ": cannot infer the sample rate without a sidecar");
    }
    s.fs = static_cast<int>(std::lround(1.0 / (times[1] - times[0])));
    s.t0 = times.front();
  }
  validate(s);
  return s;
}

void write_peaks_json(const std::string& path, const PeakList& peaks) {
  const Json j = {{"fs", peaks.fs}, {"indices", peaks.indices}};
  write_text(path, j.dump() + "\n");
}

PeakList read_peaks_json(const std::string& path) {
  try {
    const Json j = Json::parse(read_text(path));
    PeakList p;
    p.fs = j.at("fs").get<int>();
    p.indices = j.at("indices").get<std::vector<std::size_t>>();
    return p;
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IoError, path + ": malformed peak file");
  }
}

}  // namespace fetalsep
