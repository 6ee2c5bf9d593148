#include "core/sweep.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "core/metrics.hpp"
#include "core/util.hpp"

namespace dapt {

namespace {

const std::string kSchemaLine =
    "# sweep results schema " + std::to_string(ResultsStore::kSchemaVersion);
const std::string kHeaderLine =
    "task\tvariant\tarch\tfraction_pct\tseed\tmacro_f1\tweighted_f1\taccuracy";

template <typename T>
T parse_number(const std::string& field, const std::string& path) {
  T value{};
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError(path + ": bad numeric field '" + field + "'");
  }
  return value;
}

double parse_real(const std::string& field, const std::string& path) {
  try {
    size_t used = 0;
    double value = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return value;
  } catch (const std::exception&) {
    throw DataError(path + ": bad real field '" + field + "'");
  }
}

std::string format_result(const SweepResult& r) {
  char scores[128];
  std::snprintf(scores, sizeof(scores), "%.17g\t%.17g\t%.17g", r.macro_f1,
                r.weighted_f1, r.accuracy);
  return r.task + "\t" + r.variant + "\t" + r.arch + "\t" +
         std::to_string(r.fraction_pct) + "\t" + std::to_string(r.seed) +
         "\t" + scores;
}

}  // namespace

ResultsStore::ResultsStore(std::string path) : path_(std::move(path)) {
  if (!file_exists(path_)) return;
  std::vector<std::string> lines = read_lines(path_);
  if (lines.empty() || lines[0] != kSchemaLine) {
    throw DataError(path_ + ": not a results store (expected '" + kSchemaLine +
                    "')");
  }
  if (lines.size() < 2 || lines[1] != kHeaderLine) {
    throw DataError(path_ + ": results store header mismatch");
  }
  for (size_t i = 2; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    std::vector<std::string> fields = split(lines[i], '\t');
    if (fields.size() != 8) {
      throw DataError(path_ + ": line " + std::to_string(i + 1) + " has " +
                      std::to_string(fields.size()) + " fields, expected 8");
    }
    SweepResult r;
    r.task = fields[0];
    r.variant = fields[1];
    r.arch = fields[2];
    r.fraction_pct = parse_number<int>(fields[3], path_);
    r.seed = parse_number<uint64_t>(fields[4], path_);
    r.macro_f1 = parse_real(fields[5], path_);
    r.weighted_f1 = parse_real(fields[6], path_);
    r.accuracy = parse_real(fields[7], path_);
    rows_.push_back(std::move(r));
  }
}

bool ResultsStore::contains(const std::string& task, const std::string& variant,
                            const std::string& arch, int fraction_pct,
                            uint64_t seed) const {
  for (const SweepResult& r : rows_) {
    if (r.task == task && r.variant == variant && r.arch == arch &&
        r.fraction_pct == fraction_pct && r.seed == seed) {
      return true;
    }
  }
  return false;
}

void ResultsStore::append(const SweepResult& result) {
  bool fresh = !file_exists(path_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw DataError(path_ + ": cannot open results store for append");
  if (fresh) out << kSchemaLine << "\n" << kHeaderLine << "\n";
  out << format_result(result) << "\n";
  out.flush();
  if (!out) throw DataError(path_ + ": failed writing results store");
  rows_.push_back(result);
}

uint64_t sweep_subset_seed(uint64_t cell_seed, int fraction_pct) {
  return mix_seed(cell_seed, static_cast<uint64_t>(fraction_pct), 1);
}

uint64_t sweep_finetune_seed(uint64_t cell_seed, int fraction_pct) {
  return mix_seed(cell_seed, static_cast<uint64_t>(fraction_pct), 2);
}

namespace {

struct Cell {
  const SweepVariant* variant;
  int fraction_pct;
  uint64_t seed;
};

SweepResult run_cell(const SweepPlan& plan, const Cell& cell,
                     const Vocabulary& vocab, const LabeledDataset& ds) {
  std::vector<int64_t> subset = subset_training_data(
      ds, ds.train, static_cast<double>(cell.fraction_pct) / 100.0,
      sweep_subset_seed(cell.seed, cell.fraction_pct));

  TrainConfig config = plan.finetune;
  config.seed = sweep_finetune_seed(cell.seed, cell.fraction_pct);

  EncoderModel model =
      model_from_checkpoint(read_checkpoint(cell.variant->checkpoint_path),
                            plan.num_labels, config.seed);
  finetune_classifier(model, vocab, ds, subset, ds.val, config,
                      plan.num_labels, nullptr);
  MetricsRecord metrics = evaluate_model(model, vocab, ds, ds.test,
                                         config.max_len, plan.eval_batch_size);

  SweepResult r;
  r.task = plan.task;
  r.variant = cell.variant->name;
  r.arch = plan.arch;
  r.fraction_pct = cell.fraction_pct;
  r.seed = cell.seed;
  r.macro_f1 = metrics.macro_f1;
  r.weighted_f1 = metrics.weighted_f1;
  r.accuracy = metrics.accuracy;
  return r;
}

void validate_plan(const SweepPlan& plan, const LabeledDataset& ds) {
  if (plan.variants.empty()) throw ConfigError("sweep: no variants");
  if (plan.fractions_pct.empty()) throw ConfigError("sweep: no fractions");
  if (plan.seeds.empty()) throw ConfigError("sweep: no seeds");
  if (plan.num_labels < 2) {
    throw ConfigError("sweep: num_labels must be >= 2");
  }
  for (int pct : plan.fractions_pct) {
    if (pct < 1 || pct > 100) {
      throw ConfigError("sweep: fraction " + std::to_string(pct) +
                        "% outside 1..100");
    }
  }
  if (ds.train.empty() || ds.test.empty()) {
    throw DataError("sweep: dataset needs non-empty train and test splits");
  }
  for (const SweepVariant& v : plan.variants) {
    if (!file_exists(v.checkpoint_path)) {
      throw DataError("sweep: missing checkpoint '" + v.checkpoint_path +
                      "' for variant '" + v.name + "'");
    }
  }
}

}  // namespace

std::vector<SweepResult> run_sweep(const SweepPlan& plan,
                                   const Vocabulary& vocab,
                                   const LabeledDataset& ds,
                                   ResultsStore& store, std::ostream* log,
                                   int workers) {
  validate_plan(plan, ds);

  std::vector<Cell> todo;
  int skipped = 0;
  for (const SweepVariant& variant : plan.variants) {
    for (int pct : plan.fractions_pct) {
      for (uint64_t seed : plan.seeds) {
        if (store.contains(plan.task, variant.name, plan.arch, pct, seed)) {
          ++skipped;
          continue;
        }
        todo.push_back({&variant, pct, seed});
      }
    }
  }
  if (log != nullptr && skipped > 0) {
    (*log) << "sweep: " << skipped << " cells already in "
           << store.path() << ", " << todo.size() << " to run\n";
  }

  std::mutex store_mutex;
  auto run_one = [&](const Cell& cell) {
    SweepResult result = run_cell(plan, cell, vocab, ds);
    std::lock_guard<std::mutex> lock(store_mutex);
    store.append(result);
    if (log != nullptr) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "sweep: %s %s %d%% seed %llu -> macro_f1 %.4f\n",
                    cell.variant->name.c_str(), plan.task.c_str(),
                    cell.fraction_pct,
                    static_cast<unsigned long long>(cell.seed),
                    result.macro_f1);
      (*log) << line << std::flush;
    }
  };

  if (workers <= 1 || todo.size() <= 1) {
    for (const Cell& cell : todo) run_one(cell);
  } else {
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;
    size_t pool = std::min<size_t>(static_cast<size_t>(workers), todo.size());
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (size_t t = 0; t < pool; ++t) {
      threads.emplace_back([&] {
        while (!failed.load()) {
          size_t i = next.fetch_add(1);
          if (i >= todo.size()) break;
          try {
            run_one(todo[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            failed.store(true);
          }
        }
      });
    }
    for (std::thread& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  // Return this plan's full cell set (fresh plus previously stored).
  std::vector<SweepResult> out;
  for (const SweepResult& r : store.rows()) {
    if (r.task != plan.task || r.arch != plan.arch) continue;
    out.push_back(r);
  }
  return out;
}

}  // namespace dapt
