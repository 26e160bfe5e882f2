#pragma once
// Minimal CSV reading and writing for populations and result tables.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "scl/design.hpp"
#include "scl/geometry.hpp"

namespace scl {

// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws InvalidInput if absent.
  std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& cell(std::string_view text);
  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(std::size_t value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  void end_row();
  void row(const std::vector<std::string>& cells);

 private:
  std::ostream& out_;
  bool first_ = true;
};

// Either `unit_id,x1,...,xq` (coordinates) or `i,j,dist` (full distance table).
PremetricSpace read_population(const std::string& path);
PremetricSpace parse_population(const CsvTable& table);
void write_population(std::ostream& out, const PremetricSpace& space);

// `unit_id,cluster_id`; cluster labels are renumbered densely.
ClusterPartition parse_clusters(const CsvTable& table, std::size_t n);
ClusterPartition read_clusters(const std::string& path, std::size_t n);
void write_clusters(std::ostream& out, const ClusterPartition& partition);

// Dense matrix with a header row c0,c1,...
Matrix parse_matrix(const CsvTable& table);
Matrix read_matrix(const std::string& path);
void write_matrix(std::ostream& out, const Matrix& M);

// Numeric column by name.
Vector numeric_column(const CsvTable& table, std::string_view name);

}  // namespace scl
