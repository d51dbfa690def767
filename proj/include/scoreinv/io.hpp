#ifndef SCOREINV_IO_HPP
#define SCOREINV_IO_HPP

#include "scoreinv/types.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace scoreinv {

// Parse failure with a 1-based line number.
class ParseError : public std::invalid_argument {
 public:
  ParseError(const std::string& path, int line, const std::string& what)
      : std::invalid_argument(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Round-trip formatting (17 significant digits).
std::string format_double(double x);

/// Comma-separated numeric matrix; blank lines and lines starting with '#' are
/// skipped. All rows must have the same length.
Matrix read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const Matrix& a, const std::vector<std::string>& header = {});

/// Appends rows of mixed text/number cells.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::string path_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace scoreinv

#endif  // SCOREINV_IO_HPP
