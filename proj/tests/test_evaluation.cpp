// Evaluation-stack tests: classification metrics against a brute-force
// reference, the append-only results store, sweep execution (pairing,
// resumability, worker independence), and the rendered comparison tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "doctest.h"

#include "core/checkpoint.hpp"
#include "core/metrics.hpp"
#include "core/report.hpp"
#include "core/rng.hpp"
#include "core/sweep.hpp"
#include "core/util.hpp"

using namespace dapt;

namespace {

// Support math, written from the definitions rather than the library code:
// per class, precision tp/(tp+fp), recall tp/(tp+fn), F1 their harmonic
// mean, each falling back to 0 when its denominator is 0. Macro averages F1
// over classes that appear in gold; weighted weights by gold support.
struct RefScores {
  std::vector<double> precision, recall, f1;
  double macro = 0.0, weighted = 0.0, accuracy = 0.0;
};

RefScores brute_force(int C, const std::vector<int64_t>& cells) {
  RefScores ref;
  int64_t total = 0, correct = 0;
  for (int64_t v : cells) total += v;
  double macro_sum = 0.0;
  int supported = 0;
  for (int c = 0; c < C; ++c) {
    int64_t tp = cells[static_cast<size_t>(c) * C + c];
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += cells[static_cast<size_t>(o) * C + c];
      fn += cells[static_cast<size_t>(c) * C + o];
    }
    correct += tp;
    double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    ref.precision.push_back(p);
    ref.recall.push_back(r);
    ref.f1.push_back(f1);
    if (tp + fn > 0) {
      macro_sum += f1;
      ++supported;
      ref.weighted += static_cast<double>(tp + fn) * f1;
    }
  }
  ref.macro = macro_sum / static_cast<double>(supported);
  ref.weighted /= static_cast<double>(total);
  ref.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return ref;
}

ConfusionMatrix matrix_from(int C, const std::vector<int64_t>& cells) {
  ConfusionMatrix m(C);
  m.counts = cells;
  return m;
}

void check_against_brute_force(int C, const std::vector<int64_t>& cells) {
  MetricsRecord rec = f1_scores(matrix_from(C, cells));
  RefScores ref = brute_force(C, cells);
  CHECK(std::abs(rec.macro_f1 - ref.macro) <= 1e-12);
  CHECK(std::abs(rec.weighted_f1 - ref.weighted) <= 1e-12);
  CHECK(std::abs(rec.accuracy - ref.accuracy) <= 1e-12);
  REQUIRE(rec.per_class.size() == static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    const ClassMetrics& cm = rec.per_class[static_cast<size_t>(c)];
    CHECK(std::abs(cm.precision - ref.precision[static_cast<size_t>(c)]) <= 1e-12);
    CHECK(std::abs(cm.recall - ref.recall[static_cast<size_t>(c)]) <= 1e-12);
    CHECK(std::abs(cm.f1 - ref.f1[static_cast<size_t>(c)]) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("f1 scores match hand-worked fractions on a two-class matrix") {
  // 20 examples: class 0 -> 8 right, 2 confused; class 1 -> 7 right, 3
  // confused. Everything below is exact rational arithmetic.
  std::vector<int> gold, pred;
  auto add = [&](int g, int p, int n) {
    for (int i = 0; i < n; ++i) {
      gold.push_back(g);
      pred.push_back(p);
    }
  };
  add(0, 0, 8);
  add(0, 1, 2);
  add(1, 0, 3);
  add(1, 1, 7);

  ConfusionMatrix m = confusion_matrix(gold, pred, 2);
  CHECK(m.counts == std::vector<int64_t>{8, 2, 3, 7});
  CHECK(m.total() == 20);

  MetricsRecord rec = f1_scores(m);
  CHECK(std::abs(rec.per_class[0].precision - 8.0 / 11.0) <= 1e-12);
  CHECK(std::abs(rec.per_class[0].recall - 8.0 / 10.0) <= 1e-12);
  CHECK(std::abs(rec.per_class[0].f1 - 16.0 / 21.0) <= 1e-12);
  CHECK(std::abs(rec.per_class[1].precision - 7.0 / 9.0) <= 1e-12);
  CHECK(std::abs(rec.per_class[1].recall - 7.0 / 10.0) <= 1e-12);
  CHECK(std::abs(rec.per_class[1].f1 - 14.0 / 19.0) <= 1e-12);
  CHECK(rec.per_class[0].gold_support == 10);
  CHECK(rec.per_class[0].predicted_count == 11);
  CHECK(rec.per_class[1].gold_support == 10);
  CHECK(rec.per_class[1].predicted_count == 9);
  CHECK(std::abs(rec.macro_f1 - (16.0 / 21.0 + 14.0 / 19.0) / 2.0) <= 1e-12);
  // Equal supports make the weighted mean collapse onto the macro mean.
  CHECK(std::abs(rec.weighted_f1 - rec.macro_f1) <= 1e-12);
  CHECK(std::abs(rec.accuracy - 0.75) <= 1e-12);
}

TEST_CASE("every three-class matrix of up to six examples matches brute force") {
  std::vector<int64_t> cells(9, 0);
  int checked = 0;
  std::function<void(size_t, int)> fill = [&](size_t pos, int budget) {
    if (pos == cells.size()) {
      if (std::accumulate(cells.begin(), cells.end(), int64_t{0}) == 0) return;
      check_against_brute_force(3, cells);
      ++checked;
      return;
    }
    for (int v = 0; v <= budget; ++v) {
      cells[pos] = v;
      fill(pos + 1, budget - v);
    }
    cells[pos] = 0;
  };
  fill(0, 6);
  // Stars and bars: sum over totals 1..6 of C(total+8, 8).
  CHECK(checked == 5004);
}

TEST_CASE("random twenty-class matrices match brute force") {
  const int C = 20;
  Rng rng = make_rng(909);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int64_t> cells(static_cast<size_t>(C) * C, 0);
    for (int64_t& v : cells) {
      // Mostly empty cells so zero-support and zero-prediction classes show
      // up constantly, not just in hand-picked corners.
      if (uniform_real(rng) < 0.55) continue;
      v = 1 + uniform_index(rng, 9);
    }
    if (std::accumulate(cells.begin(), cells.end(), int64_t{0}) == 0) {
      cells[0] = 1;
    }
    check_against_brute_force(C, cells);
  }
}

TEST_CASE("absent classes score zero without poisoning the averages") {
  // Class 2 never appears in gold but steals one prediction: F1 0, excluded
  // from the macro mean, weightless in the weighted mean.
  MetricsRecord rec = f1_scores(confusion_matrix({0, 1, 0}, {0, 1, 2}, 3));
  CHECK(rec.per_class[2].precision == 0.0);
  CHECK(rec.per_class[2].recall == 0.0);
  CHECK(rec.per_class[2].f1 == 0.0);
  CHECK(std::abs(rec.macro_f1 - 5.0 / 6.0) <= 1e-12);
  CHECK(std::abs(rec.weighted_f1 - 7.0 / 9.0) <= 1e-12);
  CHECK(std::abs(rec.accuracy - 2.0 / 3.0) <= 1e-12);

  // A class nobody predicts keeps precision 0 but stays in the macro mean:
  // it has gold support and the model simply missed it.
  MetricsRecord skew = f1_scores(matrix_from(2, {0, 3, 0, 5}));
  CHECK(skew.per_class[0].precision == 0.0);
  CHECK(skew.per_class[0].recall == 0.0);
  CHECK(skew.per_class[0].f1 == 0.0);
  CHECK(std::abs(skew.per_class[1].f1 - 10.0 / 13.0) <= 1e-12);
  CHECK(std::abs(skew.macro_f1 - 5.0 / 13.0) <= 1e-12);
  CHECK(std::abs(skew.weighted_f1 - 25.0 / 52.0) <= 1e-12);
  CHECK(std::abs(skew.accuracy - 5.0 / 8.0) <= 1e-12);
}

TEST_CASE("metric inputs are validated") {
  CHECK_THROWS_AS(f1_scores(ConfusionMatrix(3)), DataError);
  CHECK_THROWS_AS(confusion_matrix({0, 1}, {0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(confusion_matrix({0}, {0}, 0), std::invalid_argument);
  CHECK_THROWS_AS(confusion_matrix({2}, {0}, 2), DataError);
  CHECK_THROWS_AS(confusion_matrix({0}, {-1}, 2), DataError);
}

TEST_CASE("consistently relabeling classes leaves every aggregate unchanged") {
  const int C = 5;
  Rng rng = make_rng(77);
  std::vector<int> gold, pred;
  for (int i = 0; i < 200; ++i) {
    gold.push_back(static_cast<int>(uniform_index(rng, C)));
    pred.push_back(static_cast<int>(uniform_index(rng, C)));
  }
  const int perm[C] = {2, 0, 4, 1, 3};
  std::vector<int> gold2, pred2;
  for (int i = 0; i < 200; ++i) {
    gold2.push_back(perm[gold[static_cast<size_t>(i)]]);
    pred2.push_back(perm[pred[static_cast<size_t>(i)]]);
  }
  MetricsRecord a = f1_scores(confusion_matrix(gold, pred, C));
  MetricsRecord b = f1_scores(confusion_matrix(gold2, pred2, C));
  CHECK(std::abs(a.macro_f1 - b.macro_f1) <= 1e-12);
  CHECK(std::abs(a.weighted_f1 - b.weighted_f1) <= 1e-12);
  CHECK(std::abs(a.accuracy - b.accuracy) <= 1e-12);
  for (int c = 0; c < C; ++c) {
    CHECK(a.per_class[static_cast<size_t>(c)].f1 ==
          b.per_class[static_cast<size_t>(perm[c])].f1);
  }
}

namespace {

Vocabulary word_vocab(int content_words) {
  Vocabulary v;
  v.tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (int i = 0; i < content_words; ++i) {
    v.tokens.push_back("w" + std::to_string(i));
  }
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    v.token_to_id[v.tokens[i]] = static_cast<int>(i);
  }
  return v;
}

ModelConfig toy_model_config(int vocab_size) {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.emb_size = 32;
  c.hidden_size = 32;
  c.ffn_size = 64;
  c.vocab_size = vocab_size;
  c.max_position = 16;
  return c;
}

// Mixed-length three-class texts so prediction batches pad by different
// amounts depending on how examples are grouped.
LabeledDataset eval_dataset() {
  LabeledDataset ds;
  ds.label_names = {"turun", "datar", "naik"};
  const char* texts[] = {
      "w0 w1 w2",     "w10 w11",          "w3",
      "w12 w13 w14",  "w4 w5 w6 w7 w8",  "w15",
      "w1 w2",        "w16 w17 w18 w19", "w9 w0",
      "w11 w12",      "w5",              "w13 w14 w15 w16",
      "w2 w3 w4",     "w17 w18",         "w6 w7",
  };
  for (size_t i = 0; i < std::size(texts); ++i) {
    ds.examples.push_back({texts[i], static_cast<int>(i % 3)});
  }
  return ds;
}

}  // namespace

TEST_CASE("tied classifier logits resolve to the lowest class index") {
  Vocabulary vocab = word_vocab(20);
  ModelConfig cfg = toy_model_config(vocab.size());
  cfg.num_labels = 3;
  EncoderModel model(cfg, 4);
  auto w = model.param("classifier.weight").values_mut();
  std::fill(w.begin(), w.end(), 0.0f);
  auto b = model.param("classifier.bias").values_mut();
  std::fill(b.begin(), b.end(), 0.0f);

  LabeledDataset ds = eval_dataset();
  std::vector<int64_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> pred = predict_labels(model, vocab, ds, all, 10, 4);
  REQUIRE(pred.size() == static_cast<size_t>(ds.size()));
  for (int p : pred) CHECK(p == 0);  // every logit is exactly 0.0
}

TEST_CASE("model evaluation equals scoring its own predictions") {
  Vocabulary vocab = word_vocab(20);
  ModelConfig cfg = toy_model_config(vocab.size());
  cfg.num_labels = 3;
  EncoderModel model(cfg, 9);
  LabeledDataset ds = eval_dataset();
  std::vector<int64_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);

  // Batch grouping changes pad widths but must not change predictions.
  std::vector<int> one = predict_labels(model, vocab, ds, all, 10, 1);
  std::vector<int> four = predict_labels(model, vocab, ds, all, 10, 4);
  std::vector<int> big = predict_labels(model, vocab, ds, all, 10, 64);
  CHECK(one == four);
  CHECK(one == big);

  std::vector<int> gold;
  for (int64_t i : all) gold.push_back(ds.examples[static_cast<size_t>(i)].label);
  MetricsRecord direct = f1_scores(confusion_matrix(gold, big, 3));
  MetricsRecord wrapped = evaluate_model(model, vocab, ds, all, 10, 64);
  CHECK(wrapped.macro_f1 == direct.macro_f1);
  CHECK(wrapped.weighted_f1 == direct.weighted_f1);
  CHECK(wrapped.accuracy == direct.accuracy);
  CHECK_THROWS_AS(predict_labels(model, vocab, ds, all, 10, 0),
                  std::invalid_argument);
}

TEST_CASE("the results store creates, appends, and reloads exactly") {
  namespace fs = std::filesystem;
  const std::string dir = "test_evaluation_store";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string path = dir + "/results.tsv";

  SweepResult a;
  a.task = "sentimen";
  a.variant = "baseline";
  a.arch = "tiny";
  a.fraction_pct = 30;
  a.seed = 17;
  a.macro_f1 = 1.0 / 3.0;
  a.weighted_f1 = 0.70710678118654757;
  a.accuracy = 0.9999999999999999;
  SweepResult b = a;
  b.variant = "adapted";
  b.seed = 18;
  b.macro_f1 = 2.0 / 3.0;

  {
    ResultsStore store(path);
    CHECK(store.rows().empty());
    CHECK(!fs::exists(path));  // nothing written until the first append
    store.append(a);
    store.append(b);
    CHECK(store.rows().size() == 2);
  }

  std::vector<std::string> lines = read_lines(path);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "# sweep results schema 1");
  CHECK(ResultsStore::kSchemaVersion == 1);
  CHECK(lines[1] ==
        "task\tvariant\tarch\tfraction_pct\tseed\tmacro_f1\tweighted_f1"
        "\taccuracy");

  // Reload: every double survives the %.17g round trip bit for bit.
  ResultsStore reopened(path);
  REQUIRE(reopened.rows().size() == 2);
  const SweepResult& ra = reopened.rows()[0];
  CHECK(ra.task == a.task);
  CHECK(ra.variant == a.variant);
  CHECK(ra.arch == a.arch);
  CHECK(ra.fraction_pct == a.fraction_pct);
  CHECK(ra.seed == a.seed);
  CHECK(ra.macro_f1 == a.macro_f1);
  CHECK(ra.weighted_f1 == a.weighted_f1);
  CHECK(ra.accuracy == a.accuracy);
  CHECK(reopened.rows()[1].macro_f1 == b.macro_f1);

  CHECK(reopened.contains("sentimen", "baseline", "tiny", 30, 17));
  CHECK(reopened.contains("sentimen", "adapted", "tiny", 30, 18));
  CHECK(!reopened.contains("sentimen", "baseline", "tiny", 30, 18));
  CHECK(!reopened.contains("sentimen", "baseline", "tiny", 100, 17));
  CHECK(!reopened.contains("topik", "baseline", "tiny", 30, 17));

  // Appending through a reopened store extends the file without repeating
  // the schema or header lines.
  SweepResult c = a;
  c.seed = 19;
  reopened.append(c);
  lines = read_lines(path);
  CHECK(lines.size() == 5);
  CHECK(lines[0] == "# sweep results schema 1");
  CHECK(ResultsStore(path).rows().size() == 3);

  fs::remove_all(dir);
}

TEST_CASE("corrupt results stores are rejected with the offending detail") {
  namespace fs = std::filesystem;
  const std::string dir = "test_evaluation_badstore";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string schema = "# sweep results schema 1";
  const std::string header =
      "task\tvariant\tarch\tfraction_pct\tseed\tmacro_f1\tweighted_f1"
      "\taccuracy";
  const std::string good = "t\tv\ta\t30\t7\t0.5\t0.5\t0.5";
  auto store_with = [&](const std::string& name, const std::string& body) {
    std::string path = dir + "/" + name;
    write_file(path, body);
    return path;
  };

  CHECK_THROWS_AS(ResultsStore(store_with("junk.tsv", "hello\n")), DataError);
  CHECK_THROWS_AS(ResultsStore(store_with("schema2.tsv",
                                          "# sweep results schema 2\n")),
                  DataError);
  CHECK_THROWS_AS(ResultsStore(store_with("noheader.tsv", schema + "\n")),
                  DataError);
  CHECK_THROWS_AS(
      ResultsStore(store_with("badheader.tsv", schema + "\nnope\n")),
      DataError);
  CHECK_THROWS_AS(
      ResultsStore(store_with(
          "short.tsv", schema + "\n" + header + "\nt\tv\ta\t30\t7\t0.5\n")),
      DataError);
  CHECK_THROWS_AS(
      ResultsStore(store_with("badint.tsv", schema + "\n" + header +
                                                "\nt\tv\ta\tabc\t7\t0.5\t0.5"
                                                "\t0.5\n")),
      DataError);
  CHECK_THROWS_AS(
      ResultsStore(store_with("tailint.tsv", schema + "\n" + header +
                                                 "\nt\tv\ta\t30x\t7\t0.5\t0.5"
                                                 "\t0.5\n")),
      DataError);
  CHECK_THROWS_AS(
      ResultsStore(store_with("badreal.tsv", schema + "\n" + header +
                                                 "\nt\tv\ta\t30\t7\t0.5q\t0.5"
                                                 "\t0.5\n")),
      DataError);

  // Blank lines between or after rows are tolerated; rows still load.
  const std::string good2 = "t\tv\ta\t30\t8\t0.25\t0.25\t0.25";
  ResultsStore tolerant(store_with(
      "blank.tsv", schema + "\n" + header + "\n" + good + "\n\n" + good2 +
                       "\n\n"));
  CHECK(tolerant.rows().size() == 2);
  CHECK(tolerant.rows()[1].seed == 8);

  fs::remove_all(dir);
}

TEST_CASE("sweep seed derivations are pure and cell-specific") {
  CHECK(sweep_subset_seed(5, 30) == sweep_subset_seed(5, 30));
  CHECK(sweep_finetune_seed(5, 30) == sweep_finetune_seed(5, 30));
  CHECK(sweep_subset_seed(5, 30) != sweep_finetune_seed(5, 30));
  CHECK(sweep_subset_seed(5, 30) != sweep_subset_seed(5, 10));
  CHECK(sweep_subset_seed(5, 30) != sweep_subset_seed(6, 30));
  CHECK(sweep_finetune_seed(5, 30) != sweep_finetune_seed(5, 100));
}

namespace {

// One untrained headless checkpoint, a small two-class dataset with fixed
// splits, and a 2x2x2 plan (two variants x two fractions x two seeds) that
// fine-tunes for two epochs per cell. Both variants point at the same
// checkpoint file, which turns "subset and fine-tune seeds never depend on
// the variant" into an observable fact: their scores must match cell for
// cell.
struct SweepRig {
  std::string dir;
  std::string ckpt;
  Vocabulary vocab = word_vocab(20);
  LabeledDataset ds;
  SweepPlan plan;

  explicit SweepRig(const std::string& name)
      : dir("test_evaluation_" + name), ckpt(dir + "/encoder.ckpt") {
    namespace fs = std::filesystem;
    fs::remove_all(dir);
    fs::create_directories(dir);
    EncoderModel model(toy_model_config(vocab.size()), 11);
    save_checkpoint(ckpt, model, nullptr, TrainingMeta{});

    ds.label_names = {"kelasA", "kelasB"};
    for (int i = 0; i < 16; ++i) {
      std::vector<std::string> a, b;
      for (int w = 0; w < 4; ++w) {
        a.push_back("w" + std::to_string((i + w) % 10));
        b.push_back("w" + std::to_string(10 + (i + w) % 10));
      }
      ds.examples.push_back({join(a, " "), 0});
      ds.examples.push_back({join(b, " "), 1});
    }
    for (int64_t i = 0; i < 20; ++i) ds.train.push_back(i);
    for (int64_t i = 20; i < 24; ++i) ds.val.push_back(i);
    for (int64_t i = 24; i < 32; ++i) ds.test.push_back(i);

    plan.task = "toy";
    plan.arch = "tiny";
    plan.variants = {{"first", ckpt}, {"second", ckpt}};
    plan.fractions_pct = {50, 100};
    plan.seeds = {1, 2};
    plan.num_labels = 2;
    plan.eval_batch_size = 4;
    plan.finetune.epochs = 2;
    plan.finetune.batch_size = 8;
    plan.finetune.learning_rate = 1e-3f;
    plan.finetune.max_len = 10;
  }

  ~SweepRig() { std::filesystem::remove_all(dir); }
};

const SweepResult* find_row(const std::vector<SweepResult>& rows,
                            const std::string& variant, int pct,
                            uint64_t seed) {
  for (const SweepResult& r : rows) {
    if (r.variant == variant && r.fraction_pct == pct && r.seed == seed) {
      return &r;
    }
  }
  return nullptr;
}

std::vector<SweepResult> sorted_rows(std::vector<SweepResult> rows) {
  std::sort(rows.begin(), rows.end(),
            [](const SweepResult& x, const SweepResult& y) {
              return std::tuple(x.variant, x.fraction_pct, x.seed) <
                     std::tuple(y.variant, y.fraction_pct, y.seed);
            });
  return rows;
}

}  // namespace

TEST_CASE("a sweep pairs every variant against identical subsets and seeds") {
  SweepRig rig("paired");
  ResultsStore store(rig.dir + "/results.tsv");
  std::vector<SweepResult> rows =
      run_sweep(rig.plan, rig.vocab, rig.ds, store, nullptr);
  REQUIRE(rows.size() == 8);

  for (int pct : {50, 100}) {
    for (uint64_t seed : {uint64_t{1}, uint64_t{2}}) {
      const SweepResult* first = find_row(rows, "first", pct, seed);
      const SweepResult* second = find_row(rows, "second", pct, seed);
      REQUIRE(first != nullptr);
      REQUIRE(second != nullptr);
      // Same checkpoint, same derived seeds: the pairing guarantee says the
      // two variants must land on exactly the same numbers.
      CHECK(first->macro_f1 == second->macro_f1);
      CHECK(first->weighted_f1 == second->weighted_f1);
      CHECK(first->accuracy == second->accuracy);
    }
  }

  // Guard against a vacuous pass: the paired cells must genuinely differ by
  // seed on the input side. Scores can still collide (the toy task
  // saturates), so check the drawn subsets rather than the outcomes.
  std::vector<int64_t> sub1 = subset_training_data(
      rig.ds, rig.ds.train, 0.5, sweep_subset_seed(1, 50));
  std::vector<int64_t> sub2 = subset_training_data(
      rig.ds, rig.ds.train, 0.5, sweep_subset_seed(2, 50));
  CHECK(sub1 != sub2);
}

TEST_CASE("a finished sweep reruns as a byte-identical no-op") {
  SweepRig rig("noop");
  const std::string store_path = rig.dir + "/results.tsv";
  {
    ResultsStore store(store_path);
    run_sweep(rig.plan, rig.vocab, rig.ds, store, nullptr);
  }
  std::string before = read_file(store_path);

  ResultsStore store(store_path);
  std::ostringstream log;
  std::vector<SweepResult> rows =
      run_sweep(rig.plan, rig.vocab, rig.ds, store, &log);
  CHECK(rows.size() == 8);
  CHECK(read_file(store_path) == before);
  CHECK(log.str().find("8 cells already in") != std::string::npos);
}

TEST_CASE("a sweep resumes by computing only the missing cells") {
  SweepRig rig("resume");
  const std::string store_path = rig.dir + "/results.tsv";

  SweepPlan half = rig.plan;
  half.seeds = {1};
  std::vector<SweepResult> first_rows;
  {
    ResultsStore store(store_path);
    first_rows = run_sweep(half, rig.vocab, rig.ds, store, nullptr);
    CHECK(first_rows.size() == 4);
  }
  std::string before = read_file(store_path);

  // Reopen (as a fresh process would) and ask for the full plan: the four
  // finished cells are kept as-is, four new ones are appended.
  ResultsStore store(store_path);
  std::vector<SweepResult> rows =
      run_sweep(rig.plan, rig.vocab, rig.ds, store, nullptr);
  REQUIRE(rows.size() == 8);
  std::string after = read_file(store_path);
  CHECK(after.compare(0, before.size(), before) == 0);  // append-only

  for (const SweepResult& old : first_rows) {
    const SweepResult* kept =
        find_row(rows, old.variant, old.fraction_pct, old.seed);
    REQUIRE(kept != nullptr);
    CHECK(kept->macro_f1 == old.macro_f1);
    CHECK(kept->weighted_f1 == old.weighted_f1);
    CHECK(kept->accuracy == old.accuracy);
  }

  // The interrupted-then-resumed store matches a straight-through run.
  SweepRig straight("straight");
  ResultsStore full(straight.dir + "/results.tsv");
  std::vector<SweepResult> oneshot =
      run_sweep(straight.plan, straight.vocab, straight.ds, full, nullptr);
  std::vector<SweepResult> lhs = sorted_rows(rows);
  std::vector<SweepResult> rhs = sorted_rows(oneshot);
  REQUIRE(lhs.size() == rhs.size());
  for (size_t i = 0; i < lhs.size(); ++i) {
    CHECK(lhs[i].variant == rhs[i].variant);
    CHECK(lhs[i].fraction_pct == rhs[i].fraction_pct);
    CHECK(lhs[i].seed == rhs[i].seed);
    CHECK(lhs[i].macro_f1 == rhs[i].macro_f1);
    CHECK(lhs[i].weighted_f1 == rhs[i].weighted_f1);
    CHECK(lhs[i].accuracy == rhs[i].accuracy);
  }
}

TEST_CASE("worker count changes sweep scheduling, never sweep results") {
  SweepRig rig("workers");
  ResultsStore serial(rig.dir + "/serial.tsv");
  ResultsStore threaded(rig.dir + "/threaded.tsv");
  std::vector<SweepResult> one =
      sorted_rows(run_sweep(rig.plan, rig.vocab, rig.ds, serial, nullptr, 1));
  std::vector<SweepResult> two = sorted_rows(
      run_sweep(rig.plan, rig.vocab, rig.ds, threaded, nullptr, 2));
  REQUIRE(one.size() == two.size());
  for (size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].variant == two[i].variant);
    CHECK(one[i].fraction_pct == two[i].fraction_pct);
    CHECK(one[i].seed == two[i].seed);
    CHECK(one[i].macro_f1 == two[i].macro_f1);
    CHECK(one[i].weighted_f1 == two[i].weighted_f1);
    CHECK(one[i].accuracy == two[i].accuracy);
  }
}

TEST_CASE("sweep plans are validated before any cell runs") {
  SweepRig rig("validate");
  const std::string store_path = rig.dir + "/results.tsv";
  auto expect_config_error = [&](auto mutate) {
    SweepPlan plan = rig.plan;
    LabeledDataset ds = rig.ds;
    mutate(plan, ds);
    ResultsStore store(store_path);
    CHECK_THROWS_AS(run_sweep(plan, rig.vocab, ds, store, nullptr),
                    ConfigError);
    CHECK(!file_exists(store_path));  // rejected before anything was written
  };
  auto expect_data_error = [&](auto mutate) {
    SweepPlan plan = rig.plan;
    LabeledDataset ds = rig.ds;
    mutate(plan, ds);
    ResultsStore store(store_path);
    CHECK_THROWS_AS(run_sweep(plan, rig.vocab, ds, store, nullptr), DataError);
    CHECK(!file_exists(store_path));
  };

  expect_config_error([](SweepPlan& p, LabeledDataset&) { p.variants.clear(); });
  expect_config_error(
      [](SweepPlan& p, LabeledDataset&) { p.fractions_pct.clear(); });
  expect_config_error([](SweepPlan& p, LabeledDataset&) { p.seeds.clear(); });
  expect_config_error([](SweepPlan& p, LabeledDataset&) { p.num_labels = 1; });
  expect_config_error(
      [](SweepPlan& p, LabeledDataset&) { p.fractions_pct = {0}; });
  expect_config_error(
      [](SweepPlan& p, LabeledDataset&) { p.fractions_pct = {101}; });
  expect_data_error([](SweepPlan&, LabeledDataset& d) { d.train.clear(); });
  expect_data_error([](SweepPlan&, LabeledDataset& d) { d.test.clear(); });
  expect_data_error([](SweepPlan& p, LabeledDataset&) {
    p.variants[1].checkpoint_path = "no_such_file.ckpt";
  });
}

namespace {

SweepResult result_row(const std::string& task, const std::string& variant,
                       const std::string& arch, int pct, uint64_t seed,
                       double score) {
  SweepResult r;
  r.task = task;
  r.variant = variant;
  r.arch = arch;
  r.fraction_pct = pct;
  r.seed = seed;
  r.macro_f1 = score;
  r.weighted_f1 = score;
  r.accuracy = score;
  return r;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> tsv_lines(const RenderedReport& report) {
  std::vector<std::string> lines;
  for (std::string_view piece : split(report.tsv, '\n')) {
    if (!piece.empty()) lines.emplace_back(piece);
  }
  return lines;
}

}  // namespace

TEST_CASE("two-decimal scores and deltas render as printed") {
  CHECK(format_score2(0.91) == "0.91");
  CHECK(format_score2(0.9412) == "0.94");
  CHECK(format_score2(0.0) == "0.00");
  CHECK(format_score2(1.0) == "1.00");
  CHECK(format_score2(0.125) == "0.13");  // exact halves round up
  CHECK(format_score2(0.875) == "0.88");
  CHECK(format_score2(0.005) == "0.01");

  CHECK(format_delta2(0.94, 0.91) == "+.03");
  CHECK(format_delta2(0.81, 0.55) == "+.26");
  CHECK(format_delta2(0.91, 0.91) == "+.00");
  CHECK(format_delta2(0.90, 0.91) == "-.01");
  CHECK(format_delta2(1.0, 0.0) == "+1.00");
  CHECK(format_delta2(0.0, 1.0) == "-1.00");
  // Deltas subtract the rounded displays, not the raw scores: 94 - 91
  // hundredths, even though the raw difference would round to .04.
  CHECK(format_delta2(0.944, 0.906) == "+.03");
}

TEST_CASE("reports match the published layout cell for cell") {
  std::vector<SweepResult> results = {
      result_row("sent", "baseline", "tiny", 100, 1, 0.91),
      result_row("sent", "adapted", "tiny", 100, 1, 0.94),
      result_row("sent", "baseline", "tiny", 30, 1, 0.55),
      result_row("sent", "adapted", "tiny", 30, 1, 0.81),
  };
  ReportOptions options;
  options.task = "sent";
  options.arch = "tiny";
  RenderedReport report = render_report(results, options);

  CHECK(report.text ==
        "train%  baseline  adapted\n"
        "------  --------  -------------\n"
        "100     0.91      0.94 (+.03) *\n"
        "30      0.55      0.81 (+.26) *\n");

  std::vector<std::string> lines = tsv_lines(report);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] ==
        "task\tarch\tfraction_pct\tvariant\tseeds\tscore_mean\tscore_2dp"
        "\tdelta_2dp\trow_best");
  CHECK(lines[1] == "sent\ttiny\t100\tbaseline\t1\t" + fmt17(0.91) +
                        "\t0.91\t\t0");
  CHECK(lines[2] == "sent\ttiny\t100\tadapted\t1\t" + fmt17(0.94) +
                        "\t0.94\t+.03\t1");
  CHECK(lines[3] == "sent\ttiny\t30\tbaseline\t1\t" + fmt17(0.55) +
                        "\t0.55\t\t0");
  CHECK(lines[4] == "sent\ttiny\t30\tadapted\t1\t" + fmt17(0.81) +
                        "\t0.81\t+.26\t1");

  // Unfiltered runs mark the filter columns with dashes instead.
  RenderedReport open_report = render_report(results, ReportOptions{});
  std::vector<std::string> open_lines = tsv_lines(open_report);
  REQUIRE(open_lines.size() == 5);
  CHECK(open_lines[1].rfind("-\t-\t100\tbaseline", 0) == 0);
}

TEST_CASE("report cells average seeds before rounding") {
  // Means first, then two decimals: (0.901 + 0.908) / 2 displays as 0.90.
  // Rounding each seed first would have shown 0.905 -> 0.91.
  std::vector<SweepResult> results = {
      result_row("t", "baseline", "a", 100, 1, 0.901),
      result_row("t", "baseline", "a", 100, 2, 0.908),
      result_row("t", "adapted", "a", 100, 1, 0.92),
  };
  RenderedReport report = render_report(results, ReportOptions{});
  CHECK(report.text.find("0.90      0.92 (+.02) *") != std::string::npos);

  std::vector<std::string> lines = tsv_lines(report);
  REQUIRE(lines.size() == 3);
  double mean = (0.901 + 0.908) / 2;
  CHECK(lines[1] == "-\t-\t100\tbaseline\t2\t" + fmt17(mean) + "\t0.90\t\t0");
}

TEST_CASE("report rows run from the full corpus down to the smallest slice") {
  std::vector<SweepResult> results = {
      result_row("t", "baseline", "a", 30, 1, 0.52),
      result_row("t", "baseline", "a", 100, 1, 0.60),
      result_row("t", "baseline", "a", 10, 1, 0.44),
  };
  RenderedReport report = render_report(results, ReportOptions{});
  std::vector<std::string> lines;
  for (std::string_view piece : split(report.text, '\n')) {
    if (!piece.empty()) lines.emplace_back(piece);
  }
  REQUIRE(lines.size() == 5);
  CHECK(lines[2].rfind("100", 0) == 0);
  CHECK(lines[3].rfind("30", 0) == 0);
  CHECK(lines[4].rfind("10", 0) == 0);
}

TEST_CASE("row-best markers honor displayed values and mark every tie") {
  // 0.9401 and 0.9399 differ raw but both display 0.94, so both earn the
  // star and the delta lands at +.00.
  std::vector<SweepResult> results = {
      result_row("t", "baseline", "a", 100, 1, 0.9401),
      result_row("t", "adapted", "a", 100, 1, 0.9399),
  };
  RenderedReport report = render_report(results, ReportOptions{});
  CHECK(report.text.find("0.94 *") != std::string::npos);
  CHECK(report.text.find("0.94 (+.00) *") != std::string::npos);

  std::vector<std::string> lines = tsv_lines(report);
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].back() == '1');
  CHECK(lines[2].back() == '1');
}

TEST_CASE("missing report cells render as dashes, missing baselines throw") {
  std::vector<SweepResult> results = {
      result_row("t", "baseline", "a", 100, 1, 0.60),
      result_row("t", "adapted", "a", 100, 1, 0.66),
      result_row("t", "baseline", "a", 30, 1, 0.55),
  };
  RenderedReport report = render_report(results, ReportOptions{});
  CHECK(report.text.find("30      0.55 *    -") != std::string::npos);
  CHECK(tsv_lines(report).size() == 4);  // a dash contributes no data row

  // A fraction whose baseline cell is absent cannot be reported at all:
  // there is nothing to compare against.
  std::vector<SweepResult> orphaned = {
      result_row("t", "baseline", "a", 100, 1, 0.60),
      result_row("t", "adapted", "a", 100, 1, 0.66),
      result_row("t", "adapted", "a", 10, 1, 0.30),
  };
  CHECK_THROWS_AS(render_report(orphaned, ReportOptions{}), DataError);
}

TEST_CASE("report filters and score fields select what the table shows") {
  std::vector<SweepResult> mixed = {
      result_row("sent", "baseline", "tiny", 100, 1, 0.80),
      result_row("sent", "adapted", "tiny", 100, 1, 0.85),
      result_row("topik", "baseline", "tiny", 100, 1, 0.20),
      result_row("topik", "adapted", "tiny", 100, 1, 0.33),
  };
  mixed[0].accuracy = 0.70;  // macro and accuracy disagree on purpose

  ReportOptions sent_only;
  sent_only.task = "sent";
  RenderedReport report = render_report(mixed, sent_only);
  CHECK(report.text.find("0.85") != std::string::npos);
  CHECK(report.text.find("0.33") == std::string::npos);

  ReportOptions by_accuracy = sent_only;
  by_accuracy.score_field = "accuracy";
  CHECK(render_report(mixed, by_accuracy).text.find("0.70") !=
        std::string::npos);

  ReportOptions no_match;
  no_match.task = "bogus";
  CHECK_THROWS_AS(render_report(mixed, no_match), DataError);

  ReportOptions bad_field;
  bad_field.score_field = "f1";
  CHECK_THROWS_AS(render_report(mixed, bad_field), ConfigError);
}

TEST_CASE("the baseline column leads regardless of arrival order") {
  std::vector<SweepResult> results = {
      result_row("t", "adapted", "a", 100, 1, 0.66),
      result_row("t", "another", "a", 100, 1, 0.61),
      result_row("t", "baseline", "a", 100, 1, 0.60),
  };
  auto header_tokens = [](const RenderedReport& report) {
    std::string first(split(report.text, '\n')[0]);
    return split_whitespace(first);
  };

  RenderedReport report = render_report(results, ReportOptions{});
  CHECK(header_tokens(report) ==
        std::vector<std::string>{"train%", "baseline", "adapted", "another"});

  // The baseline column name itself is an option, not a fixed string.
  ReportOptions renamed;
  renamed.baseline_variant = "another";
  RenderedReport alt = render_report(results, renamed);
  CHECK(header_tokens(alt) ==
        std::vector<std::string>{"train%", "another", "adapted", "baseline"});
  CHECK(alt.text.find("0.66 (+.05) *") != std::string::npos);
}
