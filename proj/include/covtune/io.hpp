#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace covtune {

/// Reads a headerless numeric CSV (rows = observations). Parse failures name
/// the 1-based row and column.
Eigen::MatrixXd read_matrix_csv(const std::string& path);

/// Reads a single-column (or single-value-per-line) numeric CSV.
Eigen::VectorXd read_vector_csv(const std::string& path);

/// Writes text atomically: temp file in the same directory, then rename.
void atomic_write_text(const std::string& path, const std::string& text);

/// Matrix as CSV with a header row; headers must match the column count.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& headers);

/// Vector as a one-column CSV with a header.
void write_vector_csv(const std::string& path, const Eigen::VectorXd& v,
                      const std::string& header);

/// Shortest round-trippable decimal form, used everywhere a number is
/// serialized so identical runs produce identical bytes.
std::string format_double(double value);

}  // namespace covtune
