#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "iiwgee/core_model.hpp"

namespace iiwgee {

// Shortest text that round-trips is not what downstream tools diff against;
// every numeric cell is written with 17 significant digits.
inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

// Writes through a sibling temporary and renames, so readers never observe a
// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) fail(ErrorKind::io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_cell(std::string_view cell, const std::string& where) {
  if (cell.empty() || cell == "NA") return std::nullopt;
  if (cell == "inf" || cell == "Inf") return kInfinity;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    fail(ErrorKind::io, where + ": cannot parse '" + std::string(cell) + "' as a number");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;  // (line no, cells)
  std::string text;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  CsvTable table;
  table.text = read_file(path);
  std::string_view all = table.text;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!all.empty()) {
    const auto nl = all.find('\n');
    std::string_view line = all.substr(0, nl);
    all = nl == std::string_view::npos ? std::string_view{} : all.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_csv(line);
    if (!have_header) {
      for (auto c : cells) table.header.emplace_back(c);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      fail(ErrorKind::io, path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(table.header.size()) + " columns, found " +
                              std::to_string(cells.size()));
    table.rows.emplace_back(line_no, std::move(cells));
  }
  if (!have_header) fail(ErrorKind::io, path.string() + ": missing header");
  return table;
}

}  // namespace detail

// Long-format visits file `id,time,y,<covariates...>` plus an events file
// `id,dropout_time,censor_time,competing_time`. Covariate columns listed in
// `baseline_columns` must be constant within a subject; the remaining ones
// are per-visit auxiliary covariates. Visit rows keep their file order so
// that validate_panel can report ordering problems.
inline Panel read_panel_csv(const std::filesystem::path& visits_path,
                            const std::filesystem::path& events_path, double tau,
                            const std::vector<std::string>& baseline_columns = {}) {
  auto visits = detail::read_csv(visits_path);
  if (visits.header.size() < 3 || visits.header[0] != "id" || visits.header[1] != "time" ||
      visits.header[2] != "y")
    fail(ErrorKind::io, visits_path.string() + ": header must start with id,time,y");

  Schema schema;
  std::vector<int> baseline_slot(visits.header.size(), -1), aux_slot(visits.header.size(), -1);
  for (const auto& b : baseline_columns) {
    auto it = std::find(visits.header.begin() + 3, visits.header.end(), b);
    if (it == visits.header.end())
      fail(ErrorKind::io, visits_path.string() + ": baseline column '" + b + "' not found");
    baseline_slot[static_cast<std::size_t>(it - visits.header.begin())] =
        static_cast<int>(schema.baseline.size());
    schema.baseline.push_back(b);
  }
  for (std::size_t c = 3; c < visits.header.size(); ++c) {
    if (baseline_slot[c] >= 0) continue;
    aux_slot[c] = static_cast<int>(schema.aux.size());
    schema.aux.push_back(visits.header[c]);
  }

  std::vector<SubjectRecord> subjects;
  std::map<std::string, std::size_t, std::less<>> index;
  std::vector<bool> baseline_seen;
  auto subject_for = [&](std::string_view id) -> SubjectRecord& {
    auto it = index.find(id);
    if (it != index.end()) return subjects[it->second];
    index.emplace(std::string(id), subjects.size());
    SubjectRecord s;
    s.id = std::string(id);
    s.baseline_covariates.assign(schema.baseline.size(), 0.0);
    subjects.push_back(std::move(s));
    baseline_seen.push_back(false);
    return subjects.back();
  };

  for (const auto& [line_no, cells] : visits.rows) {
    const std::string where = visits_path.string() + ":" + std::to_string(line_no);
    if (cells[0].empty()) fail(ErrorKind::io, where + ": empty id");
    SubjectRecord& s = subject_for(cells[0]);
    const std::size_t si = index.find(cells[0])->second;
    auto t = detail::parse_cell(cells[1], where);
    auto y = detail::parse_cell(cells[2], where);
    if (!t || !y) fail(ErrorKind::io, where + ": time and y are required");
    s.visit_times.push_back(*t);
    s.outcomes.push_back(*y);
    std::vector<double> aux(schema.aux.size(), 0.0);
    for (std::size_t c = 3; c < cells.size(); ++c) {
      auto v = detail::parse_cell(cells[c], where);
      if (!v) fail(ErrorKind::io, where + ": missing covariate '" + visits.header[c] + "'");
      if (aux_slot[c] >= 0) {
        aux[static_cast<std::size_t>(aux_slot[c])] = *v;
      } else {
        const auto b = static_cast<std::size_t>(baseline_slot[c]);
        if (baseline_seen[si] && s.baseline_covariates[b] != *v)
          fail(ErrorKind::io, where + ": baseline column '" + visits.header[c] +
                                  "' varies within subject " + s.id);
        s.baseline_covariates[b] = *v;
      }
    }
    baseline_seen[si] = true;
    if (!schema.aux.empty()) s.aux_covariates.push_back(std::move(aux));
  }

  auto events = detail::read_csv(events_path);
  const std::vector<std::string> expected{"id", "dropout_time", "censor_time", "competing_time"};
  if (events.header != expected)
    fail(ErrorKind::io,
         events_path.string() + ": header must be id,dropout_time,censor_time,competing_time");
  for (const auto& [line_no, cells] : events.rows) {
    const std::string where = events_path.string() + ":" + std::to_string(line_no);
    SubjectRecord& s = subject_for(cells[0]);
    s.dropout_time = detail::parse_cell(cells[1], where);
    s.censor_time = detail::parse_cell(cells[2], where);
    s.competing_time = detail::parse_cell(cells[3], where);
  }
  for (auto& s : subjects) s.admin_end = tau;
  return Panel(std::move(subjects), tau, std::move(schema));
}

inline std::string panel_visits_csv(const Panel& panel, const std::string& comment = {}) {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  const auto& schema = panel.schema();
  out << "id,time,y";
  for (const auto& b : schema.baseline) out << ',' << b;
  for (const auto& a : schema.aux) out << ',' << a;
  out << '\n';
  for (const auto& s : panel.subjects()) {
    for (std::size_t k = 0; k < s.n_visits(); ++k) {
      out << s.id << ',' << format_number(s.visit_times[k]) << ',' << format_number(s.outcomes[k]);
      for (double b : s.baseline_covariates) out << ',' << format_number(b);
      if (!schema.aux.empty())
        for (double a : s.aux_covariates[k]) out << ',' << format_number(a);
      out << '\n';
    }
  }
  return out.str();
}

inline std::string panel_events_csv(const Panel& panel, const std::string& comment = {}) {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "id,dropout_time,censor_time,competing_time\n";
  for (const auto& s : panel.subjects()) {
    out << s.id << ',' << format_optional(s.dropout_time) << ',' << format_optional(s.censor_time)
        << ',' << format_optional(s.competing_time) << '\n';
  }
  return out.str();
}

inline void write_panel_csv(const Panel& panel, const std::filesystem::path& visits_path,
                            const std::filesystem::path& events_path,
                            const std::string& comment = {}) {
  write_file_atomic(visits_path, panel_visits_csv(panel, comment));
  write_file_atomic(events_path, panel_events_csv(panel, comment));
}

}  // namespace iiwgee
