#pragma once

// Record files. Text form: '#' header lines carrying tool version, metadata
// and column names, then whitespace-separated numeric rows printed with %.17g
// so a reread reproduces every double bit for bit. Binary twin: "PSB1" magic,
// the same header block as UTF-8 text, then row-major little-endian float64.
// Readers auto-detect the form by the magic. Headers never carry timestamps;
// equal inputs give byte-identical files.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "phasesync/constants.hpp"
#include "phasesync/time_series.hpp"

namespace phasesync {

struct DataTable {
  std::vector<std::pair<std::string, std::string>> meta;  // order preserved
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // one vector per column

  std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return data[i];
    throw std::invalid_argument("table has no column named '" + name + "'");
  }

  const std::string* find_meta(const std::string& key) const {
    for (const auto& kv : meta)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string header_block(const DataTable& t) {
  std::ostringstream h;
  h << "# phasesync " << version_string << "\n";
  for (const auto& kv : t.meta) h << "# " << kv.first << ": " << kv.second << "\n";
  h << "# columns:";
  for (const auto& c : t.columns) h << ' ' << c;
  h << "\n";
  return h.str();
}

inline constexpr char binary_magic[4] = {'P', 'S', 'B', '1'};

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));  // build targets are little-endian
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof(T));
  if (!in) throw std::runtime_error("truncated binary record file");
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_table_text(const std::string& path, const DataTable& t) {
  if (t.columns.size() != t.data.size())
    throw std::invalid_argument("table column names and data count differ");
  std::ofstream out(path, std::ios::binary);  // binary: no newline translation
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << detail::header_block(t);
  const std::size_t n = t.rows();
  for (const auto& col : t.data)
    if (col.size() != n) throw std::invalid_argument("table columns have unequal lengths");
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < t.data.size(); ++c) {
      if (c) out << ' ';
      out << detail::format_double(t.data[c][r]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_table_binary(const std::string& path, const DataTable& t) {
  if (t.columns.size() != t.data.size())
    throw std::invalid_argument("table column names and data count differ");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(detail::binary_magic, 4);
  const std::string header = detail::header_block(t);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const std::size_t n = t.rows();
  for (const auto& col : t.data)
    if (col.size() != n) throw std::invalid_argument("table columns have unequal lengths");
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(n));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.data.size()));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < t.data.size(); ++c)
      detail::put_le<double>(out, t.data[c][r]);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_table(const std::string& path, const DataTable& t,
                        const std::string& format) {
  if (format == "text")
    write_table_text(path, t);
  else if (format == "binary")
    write_table_binary(path, t);
  else
    throw std::invalid_argument("unknown record format '" + format + "'");
}

namespace detail {

inline DataTable parse_header(std::istream& in, std::string* first_data_line) {
  DataTable t;
  std::string line;
  bool saw_columns = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] != '#') {
      if (first_data_line) *first_data_line = line;
      break;
    }
    std::string body = line.substr(1);
    const std::size_t start = body.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    body = body.substr(start);
    if (body.rfind("phasesync ", 0) == 0) continue;  // version banner
    if (body.rfind("columns:", 0) == 0) {
      std::istringstream cs(body.substr(8));
      std::string name;
      while (cs >> name) t.columns.push_back(name);
      saw_columns = true;
      continue;
    }
    const std::size_t colon = body.find(':');
    if (colon == std::string::npos) continue;
    std::string key = body.substr(0, colon);
    std::string value = body.substr(colon + 1);
    const std::size_t vs = value.find_first_not_of(' ');
    value = (vs == std::string::npos) ? "" : value.substr(vs);
    t.meta.emplace_back(key, value);
  }
  if (!saw_columns) throw std::runtime_error("record file has no '# columns:' header");
  t.data.resize(t.columns.size());
  return t;
}

}  // namespace detail

inline DataTable read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open record file: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in && std::memcmp(magic, detail::binary_magic, 4) == 0) {
    const auto header_len = detail::get_le<std::uint32_t>(in);
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw std::runtime_error("truncated binary record file");
    std::istringstream hs(header);
    DataTable t = detail::parse_header(hs, nullptr);
    const auto rows = detail::get_le<std::uint64_t>(in);
    const auto cols = detail::get_le<std::uint32_t>(in);
    if (cols != t.columns.size())
      throw std::runtime_error("binary column count disagrees with header");
    for (auto& col : t.data) col.reserve(rows);
    for (std::uint64_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        t.data[c].push_back(detail::get_le<double>(in));
    return t;
  }

  in.clear();
  in.seekg(0);
  std::string first_data;
  DataTable t = detail::parse_header(in, &first_data);
  auto consume_row = [&t](const std::string& line) {
    if (line.empty() || line[0] == '#') return;
    std::istringstream ls(line);
    double v;
    std::size_t c = 0;
    while (ls >> v) {
      if (c >= t.data.size()) throw std::runtime_error("row wider than the column header");
      t.data[c++].push_back(v);
    }
    if (c != 0 && c != t.data.size())
      throw std::runtime_error("row narrower than the column header");
  };
  consume_row(first_data);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    consume_row(line);
  }
  return t;
}

// Single-series convenience wrappers used by the command-line tools.

inline DataTable table_from_series(const TimeSeries& ts, const std::string& value_name,
                                   const std::string& unit,
                                   std::vector<std::pair<std::string, std::string>> extra = {}) {
  DataTable t;
  t.meta.emplace_back("dt_s", detail::format_double(ts.dt));
  t.meta.emplace_back("t0_s", detail::format_double(ts.t0));
  t.meta.emplace_back("unit", unit);
  for (auto& kv : extra) t.meta.push_back(std::move(kv));
  t.columns = {"time_s", value_name};
  t.data.resize(2);
  t.data[0].reserve(ts.size());
  t.data[1] = ts.samples;
  for (std::size_t i = 0; i < ts.size(); ++i) t.data[0].push_back(ts.time_at(i));
  return t;
}

inline TimeSeries series_from_table(const DataTable& t, const std::string& value_name) {
  TimeSeries ts;
  const auto& values = t.column(value_name);
  ts.samples = values;
  if (const std::string* unit = t.find_meta("unit")) ts.unit = *unit;
  if (const std::string* dt = t.find_meta("dt_s")) {
    ts.dt = std::stod(*dt);
    if (const std::string* t0 = t.find_meta("t0_s")) ts.t0 = std::stod(*t0);
  } else {
    const auto& time = t.column("time_s");
    if (time.size() >= 2) {
      ts.t0 = time.front();
      ts.dt = time[1] - time[0];
    } else {
      ts.t0 = time.empty() ? 0.0 : time.front();
      ts.dt = 1.0;
    }
  }
  return ts;
}

}  // namespace phasesync
