#include "covtune/io.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "covtune/errors.hpp"

namespace covtune {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

double parse_field(const std::string& field, const std::string& path, std::size_t row,
                   std::size_t col) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t' || *begin == '\r')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw IoError(path + ": row " + std::to_string(row) + ", column " + std::to_string(col) +
                  ": cannot parse '" + field + "' as a number");
  }
  return value;
}

}  // namespace

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError(path + ": cannot open for reading");
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") {
      continue;
    }
    const auto fields = split_fields(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row.push_back(parse_field(fields[c], path, lineno, c + 1));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(path + ": row " + std::to_string(lineno) + ": expected " +
                    std::to_string(rows.front().size()) + " fields, got " +
                    std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw IoError(path + ": file contains no data rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

Eigen::VectorXd read_vector_csv(const std::string& path) {
  const Eigen::MatrixXd m = read_matrix_csv(path);
  if (m.cols() != 1) {
    throw IoError(path + ": expected a single column, got " + std::to_string(m.cols()));
  }
  return m.col(0);
}

void atomic_write_text(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError(tmp.string() + ": cannot open for writing");
    }
    out << text;
    if (!out) {
      throw IoError(tmp.string() + ": write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    throw IoError(path + ": rename failed: " + ec.message());
  }
}

std::string format_double(double value) {
  if (value == 0.0) {
    value = 0.0;  // normalize negative zero
  }
  char buf[64];
  // Shortest representation that round-trips a double.
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  double parsed = 0.0;
  for (int prec = 1; prec <= 16; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, value);
    std::sscanf(probe, "%lf", &parsed);
    if (parsed == value) {
      return probe;
    }
  }
  return buf;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& headers) {
  if (static_cast<Eigen::Index>(headers.size()) != m.cols()) {
    throw IoError(path + ": header count does not match the column count");
  }
  std::string text;
  for (std::size_t j = 0; j < headers.size(); ++j) {
    if (j > 0) text += ',';
    text += headers[j];
  }
  text += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) text += ',';
      text += format_double(m(i, j));
    }
    text += '\n';
  }
  atomic_write_text(path, text);
}

void write_vector_csv(const std::string& path, const Eigen::VectorXd& v,
                      const std::string& header) {
  write_matrix_csv(path, v, {header});
}

}  // namespace covtune
