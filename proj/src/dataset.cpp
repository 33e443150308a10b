#include <charconv>
#include <fstream>
#include <sstream>

#include "bayescv/core.hpp"

namespace bayescv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t line_no) {
  double value = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ValidationError("line " + std::to_string(line_no) + ": cannot parse number '" +
                          std::string(field) + "'");
  return value;
}

}  // namespace

bool Dataset::is_binary() const {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0) return false;
  return true;
}

Eigen::VectorXd Dataset::covariate(const std::string& name) const {
  for (std::size_t j = 0; j < covariate_names.size(); ++j)
    if (covariate_names[j] == name) return x->col(static_cast<Eigen::Index>(j));
  throw ValidationError("dataset has no column '" + name + "'");
}

void Dataset::validate() const {
  if (y.size() < 1) throw ValidationError("dataset must contain at least one observation");
  if (x) {
    if (x->rows() != y.size())
      throw ValidationError("covariate matrix has " + std::to_string(x->rows()) +
                            " rows but there are " + std::to_string(y.size()) + " responses");
    if (static_cast<std::size_t>(x->cols()) != covariate_names.size())
      throw ValidationError("covariate names do not match covariate columns");
  }
  if (!y.allFinite()) throw ValidationError("responses must be finite");
}

Dataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    for (auto f : split_fields(line)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw ValidationError("CSV has no header row");
  if (line_no == 1 && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  int y_col = -1;
  std::vector<int> x_cols;
  Dataset data;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "y") {
      if (y_col >= 0) throw ValidationError("CSV header repeats column 'y'");
      y_col = static_cast<int>(j);
    } else {
      x_cols.push_back(static_cast<int>(j));
      data.covariate_names.push_back(header[j]);
    }
  }
  if (y_col < 0) throw ValidationError("CSV header lacks the required column 'y'");

  std::vector<double> ys;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    ys.push_back(parse_number(fields[static_cast<std::size_t>(y_col)], line_no));
    std::vector<double> row;
    row.reserve(x_cols.size());
    for (int c : x_cols) row.push_back(parse_number(fields[static_cast<std::size_t>(c)], line_no));
    rows.push_back(std::move(row));
  }

  const auto n = static_cast<Eigen::Index>(ys.size());
  data.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
  if (!x_cols.empty()) {
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(x_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    data.x = std::move(x);
  }
  data.validate();
  return data;
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset_csv(buffer.str());
}

}  // namespace bayescv
