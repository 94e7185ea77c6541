#include "modpipe/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

template <typename Labels>
double average_precision_impl(std::span<const double> scores, const Labels& labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!labels[order[k]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) throw UndefinedMetricError("average precision is undefined without positives");
  return sum / static_cast<double>(hits);
}

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF.
std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw InputError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Numeric value of an external label cell; nullopt when unparseable.
std::optional<double> cell_value(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "true") return 1.0;
    if (s == "false") return 0.0;
    try {
      std::size_t used = 0;
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

std::string json_text(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const bool> labels) {
  return average_precision_impl(scores, labels);
}

double average_precision(std::span<const double> scores, const std::vector<bool>& labels) {
  return average_precision_impl(scores, labels);
}

std::optional<double> EvalTable::mean_auprc() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (!r.auprc) continue;
    sum += *r.auprc;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

json to_json(const EvalTable& t) {
  json cats = json::object();
  for (auto c : kAllCategories) {
    const auto& r = t.row(c);
    cats[std::string(to_string(c))] = {{"auprc", r.auprc ? json(*r.auprc) : json(nullptr)},
                                       {"positives", r.positives},
                                       {"total", r.total}};
  }
  return {{"dataset", t.dataset}, {"checkpoint", t.checkpoint}, {"categories", cats}};
}

EvalTable eval_table_from_json(const json& j) {
  EvalTable t;
  try {
    t.dataset = j.value("dataset", "");
    t.checkpoint = j.value("checkpoint", "");
    const auto& cats = j.at("categories");
    for (auto c : kAllCategories) {
      const auto key = std::string(to_string(c));
      if (!cats.contains(key)) continue;
      const auto& r = cats[key];
      auto& row = t.rows[index_of(c)];
      if (r.contains("auprc") && !r["auprc"].is_null()) row.auprc = r["auprc"].get<double>();
      row.positives = r.value("positives", std::size_t{0});
      row.total = r.value("total", std::size_t{0});
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed eval table: ") + e.what());
  }
  return t;
}

std::string to_text(const EvalTable& t) {
  std::ostringstream out;
  out << "dataset: " << t.dataset << "\n";
  if (!t.checkpoint.empty()) out << "checkpoint: " << t.checkpoint << "\n";
  char line[96];
  std::snprintf(line, sizeof(line), "%-8s %8s %10s %8s\n", "category", "auprc", "positives",
                "total");
  out << line;
  for (auto c : kAllCategories) {
    const auto& r = t.row(c);
    char cell[16];
    if (r.auprc) {
      std::snprintf(cell, sizeof(cell), "%.4f", *r.auprc);
    } else {
      std::snprintf(cell, sizeof(cell), "n/a");
    }
    std::snprintf(line, sizeof(line), "%-8s %8s %10zu %8zu\n", std::string(to_string(c)).c_str(),
                  cell, r.positives, r.total);
    out << line;
  }
  return out.str();
}

EvalTable evaluate_scores(std::span<const CategoryScores> scores, const Dataset& d,
                          std::string checkpoint) {
  if (scores.size() != d.size()) throw DimensionError("scores do not cover the dataset");
  EvalTable t;
  t.dataset = d.name();
  t.checkpoint = std::move(checkpoint);
  for (auto c : kAllCategories) {
    const auto k = index_of(c);
    std::vector<double> s;
    std::vector<bool> y;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto& v = d[i].consolidated;
      if (!v || !v->is_labeled(c)) continue;
      s.push_back(scores[i][k]);
      y.push_back(v->is_positive(c));
    }
    auto& row = t.rows[k];
    row.total = s.size();
    row.positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), true));
    if (row.positives > 0) row.auprc = average_precision(s, y);
  }
  return t;
}

EvalTable evaluate(const Model& model, const Dataset& d) {
  const auto scores = score_all(model, d);
  return evaluate_scores(scores, d, checkpoint_id(model));
}

AdaptResult adapt_external(const std::filesystem::path& path, const TaxonomyMapping& mapping,
                           const LabelFieldSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("external dataset not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();

  ExternalFormat format = ExternalFormat::jsonl;
  if (spec.format) {
    format = *spec.format;
  } else if (path.extension() == ".csv") {
    format = ExternalFormat::csv;
  }

  // Rows as JSON objects regardless of the source format.
  std::vector<json> rows;
  std::vector<std::size_t> line_numbers;
  if (format == ExternalFormat::csv) {
    const auto table = parse_csv(content);
    if (!table.empty()) {
      const auto& header = table[0];
      if (std::find(header.begin(), header.end(), spec.text_field) == header.end()) {
        throw MappingError(spec.text_field, "missing column: " + spec.text_field);
      }
      for (std::size_t r = 1; r < table.size(); ++r) {
        json row = json::object();
        for (std::size_t c = 0; c < header.size() && c < table[r].size(); ++c) {
          row[header[c]] = table[r][c];
        }
        rows.push_back(std::move(row));
        line_numbers.push_back(r + 1);
      }
    }
  } else {
    std::istringstream lines(content);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto row = json::parse(line);
        if (!row.is_object()) throw ParseError(n, "expected a JSON object");
        rows.push_back(std::move(row));
        line_numbers.push_back(n);
      } catch (const json::exception& e) {
        throw ParseError(n, e.what());
      }
    }
  }

  AdaptResult result;
  result.dataset.set_name(path.stem().string());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto line = line_numbers[r];
    if (!row.contains(spec.text_field)) {
      throw MappingError(spec.text_field, "line " + std::to_string(line) + ": missing field " +
                                              spec.text_field);
    }
    LabelVector v;
    std::string error;
    for (const auto& rule : mapping.rules()) {
      double best = 0.0;
      for (const auto& field : rule.max_of) {
        if (!row.contains(field)) {
          error = "line " + std::to_string(line) + ": missing field " + field;
          break;
        }
        const auto value = cell_value(row[field]);
        if (!value) {
          error = "line " + std::to_string(line) + ": non-numeric field " + field;
          break;
        }
        if (!spec.threshold && *value != 0.0 && *value != 1.0) {
          error = "line " + std::to_string(line) + ": non-binary field " + field;
          break;
        }
        best = std::max(best, *value);
      }
      if (!error.empty()) break;
      const bool positive = spec.threshold ? best > *spec.threshold : best == 1.0;
      v.set(rule.category, positive ? Label::positive : Label::negative);
    }
    const auto text = json_text(row[spec.text_field]);
    if (error.empty() && text.empty()) error = "line " + std::to_string(line) + ": empty text";
    if (!error.empty()) {
      ++result.skipped;
      result.errors.push_back(std::move(error));
      continue;
    }
    Sample s;
    s.id = spec.id_field.empty() || !row.contains(spec.id_field)
               ? result.dataset.name() + "-" + std::to_string(line)
               : json_text(row[spec.id_field]);
    s.text = text;
    s.domain = Domain::target;
    s.metadata = {{"origin", "external"}, {"source_file", result.dataset.name()}};
    s.labels.push_back({"external:" + result.dataset.name(), Role::oracle, v, 0});
    result.dataset.add(std::move(s));
  }
  return result;
}

}  // namespace modpipe
