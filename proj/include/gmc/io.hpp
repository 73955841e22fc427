#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmc/core.hpp"
#include "gmc/taxonomy.hpp"

namespace gmc {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Feature batches: CSV and the GMCF binary format
//
// GMCF layout (all little-endian):
//   "GMCF" | u16 version = 1 | u32 N | u32 D | u8 has_labels
//   | N*D f64 row-major | N u32 labels (if has_labels)

inline constexpr std::uint16_t kGmcfVersion = 1;
inline constexpr std::size_t kGmcfHeaderSize = 4 + 2 + 4 + 4 + 1;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::span<const unsigned char> bytes, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  if (offset + sizeof(T) > bytes.size()) {
    fail(ErrorCode::FormatError, "unexpected end of data at byte offset " + std::to_string(offset));
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(bytes[offset + i]) << (8 * i));
  return std::bit_cast<T>(bits);
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                       std::chars_format::general, 17);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

inline std::vector<unsigned char> encode_gmcf(const FeatureBatch& batch) {
  using detail::put_le;
  std::vector<unsigned char> out{'G', 'M', 'C', 'F'};
  put_le<std::uint16_t>(out, kGmcfVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.dim()));
  out.push_back(batch.has_labels() ? 1 : 0);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index j = 0; j < batch.dim(); ++j) put_le<double>(out, batch.data()(i, j));
  }
  if (batch.labels()) {
    for (Label l : *batch.labels()) put_le<std::uint32_t>(out, l);
  }
  return out;
}

inline FeatureBatch decode_gmcf(std::span<const unsigned char> bytes) {
  using detail::get_le;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "GMCF", 4) != 0) {
    fail(ErrorCode::FormatError, "bad magic at byte offset 0");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kGmcfVersion) {
    fail(ErrorCode::FormatError, "unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const auto n = get_le<std::uint32_t>(bytes, 6);
  const auto d = get_le<std::uint32_t>(bytes, 10);
  if (bytes.size() < kGmcfHeaderSize) fail(ErrorCode::FormatError, "unexpected end of data at byte offset 14");
  const auto has_labels = bytes[14];
  if (has_labels > 1) fail(ErrorCode::FormatError, "has_labels must be 0 or 1 at byte offset 14");
  if (n == 0 || d == 0) fail(ErrorCode::EmptyBatch, "GMCF batch has N = 0 or D = 0");

  const std::size_t values = static_cast<std::size_t>(n) * d;
  const std::size_t expected = kGmcfHeaderSize + values * 8 + (has_labels ? std::size_t{n} * 4 : 0);
  if (bytes.size() < expected) {
    fail(ErrorCode::FormatError, "unexpected end of data at byte offset " + std::to_string(bytes.size()) +
                                     ", expected " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    fail(ErrorCode::FormatError, "trailing data at byte offset " + std::to_string(expected));
  }
  RowMatrix data(n, d);
  std::size_t offset = kGmcfHeaderSize;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, offset += 8) data(i, j) = get_le<double>(bytes, offset);
  }
  std::optional<std::vector<Label>> labels;
  if (has_labels) {
    labels.emplace(n);
    for (std::uint32_t i = 0; i < n; ++i, offset += 4) (*labels)[i] = get_le<std::uint32_t>(bytes, offset);
  }
  FeatureBatch batch(std::move(data), std::move(labels));
  validate_batch(batch);
  return batch;
}

struct CsvFeatures {
  FeatureBatch batch;
  /// Original label strings by dense id, when the label column was not numeric.
  std::vector<std::string> label_names;
};

/// CSV with a header row `label,f1,...,fD` (label column optional). Numeric
/// labels are kept; any non-numeric label switches to a dictionary of dense
/// ids in order of first appearance.
inline CsvFeatures parse_feature_csv(std::istream& in) {
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split(line, ',');
      break;
    }
  }
  if (header.empty()) fail(ErrorCode::EmptyBatch, "CSV has no header row");
  const bool has_labels = header.front() == "label";
  const std::size_t d = header.size() - (has_labels ? 1 : 0);
  if (d == 0) fail(ErrorCode::FormatError, "line 1: header declares no feature columns");

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != header.size()) {
      fail(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": expected " +
                                       std::to_string(header.size()) + " fields, got " +
                                       std::to_string(cells.size()));
    }
    std::size_t c = 0;
    if (has_labels) raw_labels.push_back(cells[c++]);
    for (; c < cells.size(); ++c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v) {
        fail(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": cannot parse '" + cells[c] + "'");
      }
      if (!std::isfinite(*v)) {
        fail(ErrorCode::NonFinite, "line " + std::to_string(line_no) + ": non-finite value '" + cells[c] + "'");
      }
      values.push_back(*v);
    }
  }
  const std::size_t n = values.size() / d;
  if (n == 0) fail(ErrorCode::EmptyBatch, "CSV has no data rows");

  CsvFeatures out;
  RowMatrix data = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::optional<std::vector<Label>> labels;
  if (has_labels) {
    labels.emplace();
    bool numeric = true;
    for (const auto& s : raw_labels) {
      unsigned long v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || v > std::numeric_limits<Label>::max()) {
        numeric = false;
        break;
      }
      labels->push_back(static_cast<Label>(v));
    }
    if (!numeric) {
      labels->clear();
      std::map<std::string, Label> ids;
      for (const auto& s : raw_labels) {
        auto [it, inserted] = ids.try_emplace(s, static_cast<Label>(ids.size()));
        if (inserted) out.label_names.push_back(s);
        labels->push_back(it->second);
      }
    }
  }
  out.batch = FeatureBatch(std::move(data), std::move(labels));
  validate_batch(out.batch);
  return out;
}

inline std::string format_feature_csv(const FeatureBatch& batch) {
  std::ostringstream out;
  if (batch.has_labels()) out << "label,";
  for (Eigen::Index j = 0; j < batch.dim(); ++j) out << (j ? "," : "") << 'f' << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    if (batch.labels()) out << (*batch.labels())[static_cast<std::size_t>(i)] << ',';
    for (Eigen::Index j = 0; j < batch.dim(); ++j) {
      out << (j ? "," : "") << detail::format_double(batch.data()(i, j));
    }
    out << '\n';
  }
  return out.str();
}

/// Reads CSV or GMCF, chosen by the leading magic bytes.
inline FeatureBatch read_feature_batch(const fs::path& path) {
  const auto bytes = detail::read_bytes(path);
  try {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), "GMCF", 4) == 0) return decode_gmcf(bytes);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    return parse_feature_csv(in).batch;
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

inline void write_feature_batch(const fs::path& path, const FeatureBatch& batch) {
  validate_batch(batch);
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  if (path.extension() == ".csv") {
    detail::write_text(path, format_feature_csv(batch));
    return;
  }
  const auto bytes = encode_gmcf(batch);
  detail::write_text(path, std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// Traces: JSON lines, segments.json and a CSV mirror

namespace detail {

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> optional_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline json trend_json(const Trend& t) {
  return {{"direction", std::string(to_string(t.direction))}, {"slope", t.slope}};
}

}  // namespace detail

inline json trace_row_json(const TraceRow& row, std::optional<PhaseLabel> phase) {
  json j;
  j["n"] = row.generation;
  j["fid_local"] = detail::optional_json(row.fid_local);
  j["fid_cumulative"] = row.fid_cumulative;
  j["sigma_intra"] = detail::optional_json(row.sigma_intra);
  j["m_lb"] = row.m_lb;
  j["pr_g"] = row.pr_g;
  j["phase"] = phase ? json(std::string(to_string(*phase))) : json(nullptr);
  return j;
}

/// One JSON object per generation, keys in a fixed order.
inline std::string format_trace_jsonl(const MetricTrace& trace, std::span<const PhasePoint> phases = {}) {
  std::map<int, PhaseLabel> by_n;
  for (const auto& p : phases) by_n[p.n] = p.label;
  std::string out;
  for (const auto& row : trace.rows()) {
    std::optional<PhaseLabel> phase;
    if (auto it = by_n.find(row.generation); it != by_n.end()) phase = it->second;
    // nlohmann::json sorts object keys; emit the documented order by hand.
    const json j = trace_row_json(row, phase);
    out += "{\"n\":" + j["n"].dump() + ",\"fid_local\":" + j["fid_local"].dump() +
           ",\"fid_cumulative\":" + j["fid_cumulative"].dump() + ",\"sigma_intra\":" +
           j["sigma_intra"].dump() + ",\"m_lb\":" + j["m_lb"].dump() + ",\"pr_g\":" + j["pr_g"].dump() +
           ",\"phase\":" + j["phase"].dump() + "}\n";
  }
  return out;
}

struct TraceFile {
  MetricTrace trace;
  std::vector<PhasePoint> phases;
};

inline TraceFile parse_trace_jsonl(std::istream& in) {
  TraceFile out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      TraceRow row;
      row.generation = j.at("n").get<int>();
      row.fid_local = detail::optional_double(j, "fid_local");
      row.fid_cumulative = j.at("fid_cumulative").get<double>();
      row.sigma_intra = detail::optional_double(j, "sigma_intra");
      row.m_lb = j.at("m_lb").get<double>();
      row.pr_g = j.at("pr_g").get<double>();
      if (j.contains("phase") && !j.at("phase").is_null()) {
        const auto label = parse_phase(j.at("phase").get<std::string>());
        if (!label) fail(ErrorCode::FormatError, "unknown phase label");
        out.phases.push_back({row.generation, *label});
      }
      out.trace.append(row);
    } catch (const json::exception& e) {
      fail(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline TraceFile read_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return parse_trace_jsonl(in);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

inline json segments_json(std::span<const PatternSegment> segments,
                          const std::optional<TrendVolatility>& volatility = std::nullopt) {
  json list = json::array();
  for (const auto& s : segments) {
    list.push_back({{"start", s.start},
                    {"end", s.end},
                    {"pattern", std::string(to_string(s.pattern))},
                    {"name", std::string(long_name(s.pattern))},
                    {"trends",
                     {{"sigma_intra", detail::trend_json(s.sigma_intra)},
                      {"m_lb", detail::trend_json(s.m_lb)},
                      {"pr_g", detail::trend_json(s.pr_g)}}}});
  }
  json out = {{"segments", list}};
  if (volatility) {
    out["volatility"] = {{"sigma_intra", volatility->sigma_intra},
                         {"m_lb", volatility->m_lb},
                         {"pr_g", volatility->pr_g}};
  } else {
    out["volatility"] = nullptr;
  }
  return out;
}

inline std::vector<PatternSegment> parse_segments(const json& j) {
  auto trend_of = [](const json& t) {
    Trend out;
    const auto dir = t.at("direction").get<std::string>();
    out.direction = dir == "Up" ? Direction::Up : dir == "Down" ? Direction::Down : Direction::Flat;
    out.slope = t.at("slope").get<double>();
    return out;
  };
  std::vector<PatternSegment> out;
  for (const auto& s : j.at("segments")) {
    const auto pattern = parse_pattern(s.at("pattern").get<std::string>());
    if (!pattern) fail(ErrorCode::FormatError, "unknown pattern in segments");
    out.push_back({s.at("start").get<int>(), s.at("end").get<int>(), *pattern,
                   trend_of(s.at("trends").at("sigma_intra")), trend_of(s.at("trends").at("m_lb")),
                   trend_of(s.at("trends").at("pr_g"))});
  }
  return out;
}

inline std::string format_trace_csv(const MetricTrace& trace, std::span<const PhasePoint> phases = {}) {
  std::map<int, PhaseLabel> by_n;
  for (const auto& p : phases) by_n[p.n] = p.label;
  auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
  std::string out = "n,fid_local,fid_cumulative,sigma_intra,m_lb,pr_g,phase\n";
  for (const auto& row : trace.rows()) {
    const auto it = by_n.find(row.generation);
    out += std::to_string(row.generation) + ',' + opt(row.fid_local) + ',' +
           detail::format_double(row.fid_cumulative) + ',' + opt(row.sigma_intra) + ',' +
           detail::format_double(row.m_lb) + ',' + detail::format_double(row.pr_g) + ',' +
           (it == by_n.end() ? std::string() : std::string(to_string(it->second))) + '\n';
  }
  return out;
}

/// Companion segment file of a trace: `segments.json` next to `trace.jsonl`,
/// `<stem>.segments.json` for any other stem.
inline fs::path segments_path(const fs::path& trace_path) {
  const auto stem = trace_path.stem().string();
  return trace_path.parent_path() / (stem == "trace" ? std::string("segments.json") : stem + ".segments.json");
}

/// Writes `path` (JSON lines) plus the companion segment file and a CSV
/// mirror (`path` with extension .csv) in the same directory.
inline void write_trace(const MetricTrace& trace, std::span<const PhasePoint> phases,
                        std::span<const PatternSegment> segments, const fs::path& path,
                        const std::optional<TrendVolatility>& volatility = std::nullopt) {
  const fs::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  }
  detail::write_text(path, format_trace_jsonl(trace, phases));
  detail::write_text(segments_path(path), segments_json(segments, volatility).dump(2) + "\n");
  fs::path csv = path;
  csv.replace_extension(".csv");
  detail::write_text(csv, format_trace_csv(trace, phases));
}

}  // namespace gmc
