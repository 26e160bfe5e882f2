#include "scl/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

#include "scl/errors.hpp"

namespace scl {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return k;
  }
  throw InvalidInput("missing CSV column '" + std::string(name) + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw InvalidInput("unterminated quote in CSV line");
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& text) {
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw InvalidInput("not a number: '" + text + "'");
  }
  return value;
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line.front() == '#') continue;
    auto cells = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw InvalidInput("CSV row has " + std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) throw InvalidInput("CSV input is empty");
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return parse_csv(in);
}

CsvWriter& CsvWriter::cell(std::string_view text) {
  if (!first_) out_ << ',';
  first_ = false;
  if (text.find_first_of(",\"\n") != std::string_view::npos) {
    out_ << '"';
    for (char ch : text) out_ << (ch == '"' ? "\"\"" : std::string(1, ch));
    out_ << '"';
  } else {
    out_ << text;
  }
  return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_double(value)); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::to_string(value)); }

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (const auto& c : cells) cell(c);
  end_row();
}

PremetricSpace parse_population(const CsvTable& table) {
  const auto& h = table.header;
  if (h.size() == 3 && h[0] == "i" && h[1] == "j" && h[2] == "dist") {
    std::size_t n = 0;
    std::vector<std::tuple<std::size_t, std::size_t, double>> entries;
    for (const auto& row : table.rows) {
      const double i = parse_number(row[0]);
      const double j = parse_number(row[1]);
      if (i < 0 || j < 0 || i != std::floor(i) || j != std::floor(j)) {
        throw InvalidInput("unit ids must be nonnegative integers");
      }
      entries.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                           parse_number(row[2]));
      n = std::max({n, static_cast<std::size_t>(i) + 1, static_cast<std::size_t>(j) + 1});
    }
    std::vector<double> dist(n * n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) dist[i * n + i] = 0.0;
    for (const auto& [i, j, d] : entries) dist[i * n + j] = d;
    for (double d : dist) {
      if (std::isnan(d)) throw InvalidInput("distance table is incomplete");
    }
    return PremetricSpace::from_distances(std::move(dist), n);
  }
  if (h.size() >= 2 && h[0] == "unit_id") {
    const auto q = static_cast<Eigen::Index>(h.size() - 1);
    for (Eigen::Index k = 0; k < q; ++k) {
      if (h[static_cast<std::size_t>(k + 1)] != "x" + std::to_string(k + 1)) {
        throw InvalidInput("coordinate columns must be x1..xq");
      }
    }
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    Matrix coords(n, q);
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const auto& row : table.rows) {
      const double id = parse_number(row[0]);
      if (id < 0 || id >= static_cast<double>(n) || id != std::floor(id)) {
        throw InvalidInput("unit ids must be 0..n-1");
      }
      const auto i = static_cast<Eigen::Index>(id);
      if (seen[static_cast<std::size_t>(i)]++) throw InvalidInput("duplicate unit id");
      for (Eigen::Index k = 0; k < q; ++k) coords(i, k) = parse_number(row[static_cast<std::size_t>(k + 1)]);
    }
    return PremetricSpace::from_coords(coords);
  }
  throw InvalidInput("population CSV needs header unit_id,x1,... or i,j,dist");
}

PremetricSpace read_population(const std::string& path) { return parse_population(read_csv(path)); }

void write_population(std::ostream& out, const PremetricSpace& space) {
  CsvWriter csv(out);
  if (space.has_coords()) {
    const auto& X = space.coords();
    csv.cell("unit_id");
    for (Eigen::Index k = 0; k < X.cols(); ++k) csv.cell("x" + std::to_string(k + 1));
    csv.end_row();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      csv.cell(static_cast<long long>(i));
      for (Eigen::Index k = 0; k < X.cols(); ++k) csv.cell(X(i, k));
      csv.end_row();
    }
    return;
  }
  csv.row({"i", "j", "dist"});
  for (std::size_t i = 0; i < space.size(); ++i) {
    for (std::size_t j = 0; j < space.size(); ++j) {
      if (i == j) continue;
      csv.cell(i).cell(j).cell(space.distance(i, j));
      csv.end_row();
    }
  }
}

ClusterPartition parse_clusters(const CsvTable& table, std::size_t n) {
  const auto uc = table.column("unit_id");
  const auto cc = table.column("cluster_id");
  if (table.rows.size() != n) throw InvalidInput("cluster file must list every unit once");
  std::vector<int> labels(n, 0);
  std::vector<char> seen(n, 0);
  for (const auto& row : table.rows) {
    const double id = parse_number(row[uc]);
    const double label = parse_number(row[cc]);
    if (id < 0 || id >= static_cast<double>(n) || id != std::floor(id)) {
      throw InvalidInput("unit ids must be 0..n-1");
    }
    if (label != std::floor(label)) throw InvalidInput("cluster ids must be integers");
    const auto i = static_cast<std::size_t>(id);
    if (seen[i]++) throw InvalidInput("duplicate unit id in cluster file");
    labels[i] = static_cast<int>(label);
  }
  auto partition = partition_from_assignment(labels);
  validate_partition(partition, n);
  return partition;
}

ClusterPartition read_clusters(const std::string& path, std::size_t n) {
  return parse_clusters(read_csv(path), n);
}

void write_clusters(std::ostream& out, const ClusterPartition& partition) {
  CsvWriter csv(out);
  csv.row({"unit_id", "cluster_id"});
  for (std::size_t i = 0; i < partition.size(); ++i) {
    csv.cell(i).cell(partition.assignment[i]);
    csv.end_row();
  }
}

Matrix parse_matrix(const CsvTable& table) {
  const auto rows = static_cast<Eigen::Index>(table.rows.size());
  const auto cols = static_cast<Eigen::Index>(table.header.size());
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      M(i, j) = parse_number(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
  }
  return M;
}

Matrix read_matrix(const std::string& path) { return parse_matrix(read_csv(path)); }

void write_matrix(std::ostream& out, const Matrix& M) {
  CsvWriter csv(out);
  for (Eigen::Index j = 0; j < M.cols(); ++j) csv.cell("c" + std::to_string(j));
  csv.end_row();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) csv.cell(M(i, j));
    csv.end_row();
  }
}

Vector numeric_column(const CsvTable& table, std::string_view name) {
  const auto k = table.column(name);
  Vector v(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    v(static_cast<Eigen::Index>(r)) = parse_number(table.rows[r][k]);
  }
  return v;
}

}  // namespace scl
