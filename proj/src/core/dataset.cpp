#include "core/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "core/rng.hpp"
#include "core/util.hpp"

namespace dapt {

void validate_dataset(const LabeledDataset& ds) {
  for (size_t i = 0; i < ds.examples.size(); ++i) {
    int label = ds.examples[i].label;
    if (label < 0 || label >= ds.num_labels()) {
      throw DataError("dataset: example " + std::to_string(i) + " has label " +
                      std::to_string(label) + ", expected 0.." +
                      std::to_string(ds.num_labels() - 1));
    }
  }
  if (!ds.has_splits()) return;
  std::vector<int> seen(ds.examples.size(), 0);
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (int64_t idx : *split) {
      if (idx < 0 || idx >= ds.size()) {
        throw DataError("dataset: split index " + std::to_string(idx) +
                        " out of range for " + std::to_string(ds.size()) +
                        " examples");
      }
      ++seen[static_cast<size_t>(idx)];
    }
  }
  for (size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != 1) {
      throw DataError("dataset: example " + std::to_string(i) +
                      (seen[i] == 0 ? " missing from all splits"
                                    : " appears in more than one split"));
    }
  }
}

std::vector<int64_t> label_histogram(const LabeledDataset& ds,
                                     const std::vector<int64_t>& indices) {
  std::vector<int64_t> counts(static_cast<size_t>(ds.num_labels()), 0);
  for (int64_t idx : indices) {
    ++counts[static_cast<size_t>(ds.examples[static_cast<size_t>(idx)].label)];
  }
  return counts;
}

namespace {

// Partitions `indices` in place order into three pieces at the cumulative-
// ratio boundaries and appends them to the output sets.
void partition_indices(const std::vector<int64_t>& indices, SplitRatios r,
                       std::vector<int64_t>& train, std::vector<int64_t>& val,
                       std::vector<int64_t>& test) {
  int64_t n = static_cast<int64_t>(indices.size());
  int64_t b1 = round_half_up_to_int(static_cast<double>(n) * r.train);
  int64_t b2 = round_half_up_to_int(static_cast<double>(n) * (r.train + r.val));
  b1 = std::clamp<int64_t>(b1, 0, n);
  b2 = std::clamp<int64_t>(b2, b1, n);
  train.insert(train.end(), indices.begin(), indices.begin() + b1);
  val.insert(val.end(), indices.begin() + b1, indices.begin() + b2);
  test.insert(test.end(), indices.begin() + b2, indices.end());
}

}  // namespace

LabeledDataset make_splits(const LabeledDataset& ds, SplitRatios ratios,
                           uint64_t seed, bool stratified) {
  if (!(ratios.train > 0.0) || !(ratios.val > 0.0) || !(ratios.test > 0.0)) {
    throw ConfigError("make_splits: all three ratios must be positive");
  }
  double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("make_splits: ratios sum to " + std::to_string(sum) +
                      ", expected 1");
  }
  if (ds.size() == 0) throw DataError("make_splits: empty dataset");

  LabeledDataset out = ds;
  out.train.clear();
  out.val.clear();
  out.test.clear();

  if (stratified) {
    for (int label = 0; label < ds.num_labels(); ++label) {
      std::vector<int64_t> indices;
      for (int64_t i = 0; i < ds.size(); ++i) {
        if (ds.examples[static_cast<size_t>(i)].label == label) {
          indices.push_back(i);
        }
      }
      if (indices.empty()) continue;
      Rng rng = make_rng(mix_seed(seed, static_cast<uint64_t>(label)));
      std::shuffle(indices.begin(), indices.end(), rng);
      partition_indices(indices, ratios, out.train, out.val, out.test);
    }
  } else {
    std::vector<int64_t> indices(static_cast<size_t>(ds.size()));
    std::iota(indices.begin(), indices.end(), 0);
    Rng rng = make_rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    partition_indices(indices, ratios, out.train, out.val, out.test);
  }

  if (out.train.empty() || out.val.empty() || out.test.empty()) {
    throw DataError("make_splits: degenerate split (would leave an empty set)");
  }
  validate_dataset(out);
  return out;
}

// ---- on-disk format ----

namespace {

bool needs_quoting(std::string_view field) {
  return field.find_first_of(",\"\n\r") != std::string_view::npos;
}

std::string quote_field(std::string_view field) {
  std::string out = "\"";
  for (char c : field) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

// RFC 4180 reader over the whole file: quoted fields may contain commas,
// quotes (doubled) and line breaks. Returns one vector of fields per record.
std::vector<std::vector<std::string>> parse_delimited(const std::string& text,
                                                      const std::string& path) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  size_t i = 0;
  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    // Skip blank records (trailing newline at end of file).
    if (fields.size() != 1 || !fields[0].empty()) {
      records.push_back(std::move(fields));
    }
    fields.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field += c;
        ++i;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw DataError(path + ": stray quote in record " +
                          std::to_string(records.size() + 1));
        }
        in_quotes = true;
        field_was_quoted = true;
        ++i;
        break;
      case ',':
        end_field();
        ++i;
        break;
      case '\r':
        ++i;
        break;
      case '\n':
        end_record();
        ++i;
        break;
      default:
        field += c;
        ++i;
        break;
    }
  }
  if (in_quotes) throw DataError(path + ": unterminated quoted field");
  if (!field.empty() || !fields.empty()) end_record();
  return records;
}

int parse_label(const std::string& text, const std::string& path,
                size_t record) {
  int value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError(path + ": record " + std::to_string(record) +
                    " has non-integer label '" + text + "'");
  }
  return value;
}

std::vector<int64_t> read_index_file(const std::string& path) {
  std::vector<int64_t> out;
  for (const std::string& raw : read_lines(path)) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    int64_t value = 0;
    auto [ptr, ec] =
        std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      throw DataError(path + ": bad index line '" + line + "'");
    }
    out.push_back(value);
  }
  return out;
}

void write_index_file(const std::string& path,
                      const std::vector<int64_t>& indices) {
  std::vector<std::string> lines;
  lines.reserve(indices.size());
  for (int64_t idx : indices) lines.push_back(std::to_string(idx));
  write_lines(path, lines);
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const std::string& csv_path) {
  validate_dataset(ds);
  std::ostringstream os;
  os << "text,label\n";
  for (const LabeledExample& ex : ds.examples) {
    if (needs_quoting(ex.text)) {
      os << quote_field(ex.text);
    } else {
      os << ex.text;
    }
    os << ',' << ex.label << '\n';
  }
  write_file(csv_path, os.str());

  std::vector<std::string> label_lines;
  for (size_t i = 0; i < ds.label_names.size(); ++i) {
    label_lines.push_back(std::to_string(i) + "\t" + ds.label_names[i]);
  }
  write_file(csv_path + ".labels", join(label_lines, "\n") +
                                       (label_lines.empty() ? "" : "\n"));

  if (ds.has_splits()) {
    write_index_file(csv_path + ".train", ds.train);
    write_index_file(csv_path + ".val", ds.val);
    write_index_file(csv_path + ".test", ds.test);
  }
}

LabeledDataset load_dataset(const std::string& csv_path) {
  LabeledDataset ds;

  auto records = parse_delimited(read_file(csv_path), csv_path);
  if (records.empty() || records[0].size() != 2 ||
      trim(records[0][0]) != "text" || trim(records[0][1]) != "label") {
    throw DataError(csv_path + ": expected header 'text,label'");
  }
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != 2) {
      throw DataError(csv_path + ": record " + std::to_string(r + 1) + " has " +
                      std::to_string(records[r].size()) +
                      " fields, expected 2");
    }
    ds.examples.push_back(
        {records[r][0], parse_label(records[r][1], csv_path, r + 1)});
  }

  const std::string labels_path = csv_path + ".labels";
  for (const std::string& raw : read_lines(labels_path)) {
    if (trim(raw).empty()) continue;
    size_t tab = raw.find('\t');
    if (tab == std::string::npos) {
      throw DataError(labels_path + ": expected 'id<TAB>name', got '" + raw +
                      "'");
    }
    int id = parse_label(raw.substr(0, tab), labels_path, ds.label_names.size() + 1);
    if (id != static_cast<int>(ds.label_names.size())) {
      throw DataError(labels_path + ": label ids must be consecutive from 0");
    }
    ds.label_names.push_back(raw.substr(tab + 1));
  }

  bool any_split = file_exists(csv_path + ".train") ||
                   file_exists(csv_path + ".val") ||
                   file_exists(csv_path + ".test");
  if (any_split) {
    for (const char* ext : {".train", ".val", ".test"}) {
      if (!file_exists(csv_path + ext)) {
        throw DataError(csv_path + ext + ": missing split file (found a "
                        "partial split manifest)");
      }
    }
    ds.train = read_index_file(csv_path + ".train");
    ds.val = read_index_file(csv_path + ".val");
    ds.test = read_index_file(csv_path + ".test");
  }

  validate_dataset(ds);
  return ds;
}

}  // namespace dapt
