#include "core/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "core/checkpoint.hpp"
#include "core/cleaning.hpp"
#include "core/dataset.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/report.hpp"
#include "core/sweep.hpp"
#include "core/training.hpp"
#include "core/util.hpp"
#include "core/wordpiece.hpp"

namespace fs = std::filesystem;

namespace dapt {

namespace {

// Every setting the pipeline understands; anything else is a typo.
const std::vector<std::string> kKnownKeys = {
    "paths.out_dir",
    "clean.input_dir", "clean.input_files", "clean.style", "clean.output",
    "clean.min_sentence_words", "clean.ad_markers", "clean.abbreviations",
    "tokenizer.corpus", "tokenizer.vocab_size", "tokenizer.min_frequency",
    "tokenizer.lowercase", "tokenizer.output",
    "model.preset", "model.num_layers", "model.num_heads", "model.emb_size",
    "model.hidden_size", "model.ffn_size", "model.max_position",
    "model.dropout", "model.tie_mlm_head",
    "pretrain.corpus", "pretrain.vocab", "pretrain.epochs",
    "pretrain.batch_size", "pretrain.learning_rate", "pretrain.weight_decay",
    "pretrain.mlm_probability", "pretrain.seed", "pretrain.max_len",
    "pretrain.out",
    "posttrain.corpus", "posttrain.vocab", "posttrain.init_checkpoint",
    "posttrain.resume", "posttrain.epochs", "posttrain.batch_size",
    "posttrain.learning_rate", "posttrain.weight_decay",
    "posttrain.mlm_probability", "posttrain.seed", "posttrain.max_len",
    "posttrain.out",
    "dataset.path", "dataset.split_ratios", "dataset.split_seed",
    "dataset.stratified_split",
    "finetune.vocab", "finetune.checkpoint", "finetune.preset",
    "finetune.epochs", "finetune.batch_size", "finetune.learning_rate",
    "finetune.weight_decay", "finetune.seed", "finetune.max_len",
    "finetune.stratified_subset", "finetune.out",
    "sweep.vocab", "sweep.task", "sweep.arch", "sweep.variants",
    "sweep.fractions", "sweep.seeds", "sweep.results", "sweep.workers",
    "sweep.eval_batch_size",
    "evaluate.vocab", "evaluate.checkpoint", "evaluate.split",
    "evaluate.batch_size", "evaluate.max_len",
    "report.results", "report.baseline", "report.score", "report.task",
    "report.arch", "report.out_text", "report.out_tsv",
    "stats.corpora", "stats.out",
};

std::string out_dir(const Settings& s) {
  return s.get_string("paths", "out_dir", "out");
}

void write_manifest(const Settings& s, const std::string& command,
                    double elapsed_seconds) {
  std::string path = out_dir(s) + "/manifest_" + command + ".cfg";
  char elapsed[48];
  std::snprintf(elapsed, sizeof(elapsed), "# elapsed_seconds=%.3f\n",
                elapsed_seconds);
  std::string text = "# run manifest (valid as a config file)\n";
  text += std::string("# tool_version=") + kVersionString + "\n";
  text += "# command=" + command + "\n";
  text += elapsed;
  text += s.serialize();
  write_file(path, text);
}

std::string default_vocab_path(const Settings& s) {
  return s.get_string("tokenizer", "output", out_dir(s) + "/vocab.txt");
}

Vocabulary load_vocab_for(const Settings& s, const std::string& section) {
  std::string path =
      s.get_string(section, "vocab", default_vocab_path(s));
  Vocabulary vocab = load_vocabulary(path);
  vocab.lowercase = s.get_bool("tokenizer", "lowercase", true);
  return vocab;
}

CleaningRules cleaning_rules_from(const Settings& s) {
  CleaningRules rules = CleaningRules::defaults();
  rules.min_sentence_words =
      static_cast<int>(s.get_int("clean", "min_sentence_words", 3));
  if (s.has("clean", "ad_markers")) {
    rules.ad_markers = s.get_list("clean", "ad_markers", {});
  }
  if (s.has("clean", "abbreviations")) {
    rules.abbreviations = s.get_list("clean", "abbreviations", {});
  }
  return rules;
}

ModelConfig model_config_from(const Settings& s, int vocab_size) {
  ModelConfig c =
      ModelConfig::preset(s.get_string("model", "preset", "tiny"), vocab_size);
  c.num_layers = static_cast<int>(s.get_int("model", "num_layers", c.num_layers));
  c.num_heads = static_cast<int>(s.get_int("model", "num_heads", c.num_heads));
  c.emb_size = static_cast<int>(s.get_int("model", "emb_size", c.emb_size));
  c.hidden_size =
      static_cast<int>(s.get_int("model", "hidden_size", c.hidden_size));
  c.ffn_size = static_cast<int>(s.get_int("model", "ffn_size", c.ffn_size));
  c.max_position =
      static_cast<int>(s.get_int("model", "max_position", c.max_position));
  c.dropout_prob = static_cast<float>(s.get_real("model", "dropout", 0.1));
  c.tie_mlm_head = s.get_bool("model", "tie_mlm_head", true);
  c.validate();
  return c;
}

TrainConfig train_config_from(const Settings& s, const std::string& section,
                              TrainConfig base) {
  base.epochs = static_cast<int>(s.get_int(section, "epochs", base.epochs));
  base.batch_size =
      static_cast<int>(s.get_int(section, "batch_size", base.batch_size));
  base.learning_rate = static_cast<float>(
      s.get_real(section, "learning_rate", base.learning_rate));
  base.weight_decay = static_cast<float>(
      s.get_real(section, "weight_decay", base.weight_decay));
  base.mlm_probability = static_cast<float>(
      s.get_real(section, "mlm_probability", base.mlm_probability));
  base.seed = s.get_u64(section, "seed", base.seed);
  base.max_len = static_cast<int>(s.get_int(section, "max_len", base.max_len));
  base.validate();
  return base;
}

std::vector<std::string> read_corpus_files(const std::vector<std::string>& paths) {
  std::vector<std::string> sentences;
  for (const std::string& path : paths) {
    std::vector<std::string> lines = read_lines(path);
    for (std::string& line : lines) {
      std::string t = trim(line);
      if (!t.empty()) sentences.push_back(std::move(t));
    }
  }
  return sentences;
}

LabeledDataset load_dataset_with_splits(const Settings& s) {
  LabeledDataset ds = load_dataset(s.require_string("dataset", "path"));
  if (ds.has_splits()) return ds;
  std::vector<std::string> parts =
      s.get_list("dataset", "split_ratios", {"0.8", "0.1", "0.1"});
  if (parts.size() != 3) {
    throw ConfigError("dataset.split_ratios: expected three ratios");
  }
  SplitRatios ratios;
  try {
    ratios.train = std::stod(parts[0]);
    ratios.val = std::stod(parts[1]);
    ratios.test = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw ConfigError("dataset.split_ratios: bad real in '" + parts[0] + "," +
                      parts[1] + "," + parts[2] + "'");
  }
  return make_splits(ds, ratios, s.get_u64("dataset", "split_seed", 42),
                     s.get_bool("dataset", "stratified_split", true));
}

std::ofstream open_log(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream log(dir + "/" + name);
  if (!log) throw DataError(dir + "/" + name + ": cannot open log file");
  return log;
}

// ---- stages ----

void cmd_clean_corpus(const Settings& s, std::ostream& out) {
  std::vector<std::string> inputs = s.get_list("clean", "input_files", {});
  if (inputs.empty()) {
    std::string dir = s.require_string("clean", "input_dir");
    if (!fs::is_directory(dir)) {
      throw DataError("clean.input_dir '" + dir + "' is not a directory");
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) inputs.push_back(entry.path().string());
    }
    std::sort(inputs.begin(), inputs.end());  // deterministic source order
    if (inputs.empty()) {
      throw DataError("clean.input_dir '" + dir + "' holds no files");
    }
  }
  StyleTag style = parse_style_tag(s.get_string("clean", "style", "mixed"));
  CleaningRules rules = cleaning_rules_from(s);

  std::vector<std::string> sentences;
  for (const std::string& path : inputs) {
    RawDocument doc{fs::path(path).filename().string(), read_file(path), style};
    if (doc.body.empty()) {
      throw DataError(path + ": empty document");
    }
    for (std::string& sentence :
         split_sentences(clean_text(doc.body, rules), rules)) {
      sentences.push_back(std::move(sentence));
    }
  }
  std::string output = s.get_string("clean", "output", out_dir(s) + "/corpus.txt");
  write_lines(output, sentences);

  CorpusStats stats = corpus_stats(sentences);
  out << "cleaned " << inputs.size() << " documents -> " << output << "\n"
      << render_stats_table({{fs::path(output).stem().string(), style, stats}});
}

void cmd_train_tokenizer(const Settings& s, std::ostream& out) {
  std::vector<std::string> corpus_paths = s.get_list(
      "tokenizer", "corpus",
      {s.get_string("clean", "output", out_dir(s) + "/corpus.txt")});
  std::vector<std::string> corpus = read_corpus_files(corpus_paths);
  Vocabulary vocab = train_wordpiece(
      corpus, static_cast<int>(s.get_int("tokenizer", "vocab_size", 2000)),
      static_cast<int>(s.get_int("tokenizer", "min_frequency", 2)),
      s.get_bool("tokenizer", "lowercase", true));
  std::string output = default_vocab_path(s);
  save_vocabulary(vocab, output);
  out << "trained vocabulary: " << vocab.size() << " tokens -> " << output
      << "\n";
}

void run_mlm_stage(const Settings& s, std::ostream& out,
                   const std::string& section) {
  Vocabulary vocab = load_vocab_for(s, section);
  std::vector<std::string> corpus_paths = s.get_list(section, "corpus", {});
  if (corpus_paths.empty()) {
    throw ConfigError("missing required setting " + section + ".corpus");
  }
  std::vector<std::string> corpus = read_corpus_files(corpus_paths);
  TrainConfig config =
      train_config_from(s, section, TrainConfig::posttrain());
  std::string stage_out = s.get_string(section, "out", out_dir(s) + "/" + section);
  std::ofstream log = open_log(stage_out, "train.log");

  if (section == "posttrain" && s.has("posttrain", "resume")) {
    Checkpoint cp = read_checkpoint(s.require_string("posttrain", "resume"));
    if (!cp.optimizer.has_value()) {
      throw DataError("posttrain.resume: checkpoint lacks optimizer state");
    }
    if (s.has("model", "preset")) {
      check_config(cp, model_config_from(s, vocab.size()));
    }
    OptimizerState state = std::move(*cp.optimizer);
    TrainingMeta meta = cp.meta;
    int64_t resumed_from = meta.epochs_completed;
    EncoderModel model = model_from_checkpoint(std::move(cp));
    AdamW optimizer(state.config);
    optimizer.restore(state.step_count, std::move(state.slots));
    std::vector<double> losses = posttrain_mlm(model, optimizer, meta, vocab,
                                               corpus, config, stage_out, &log);
    save_checkpoint(stage_out + "/model.ckpt", model, nullptr, meta);
    char line[128];
    std::snprintf(line, sizeof(line),
                  "%s: resumed after epoch %lld, now %lld epochs, final loss "
                  "%.6f -> %s\n",
                  section.c_str(), static_cast<long long>(resumed_from),
                  static_cast<long long>(meta.epochs_completed),
                  losses.empty() ? 0.0 : losses.back(), stage_out.c_str());
    out << line;
    return;
  }

  EncoderModel model = [&]() {
    if (section == "posttrain") {
      Checkpoint cp =
          read_checkpoint(s.require_string("posttrain", "init_checkpoint"));
      if (s.has("model", "preset")) {
        check_config(cp, model_config_from(s, vocab.size()));
      }
      return model_from_checkpoint(std::move(cp));
    }
    return EncoderModel(model_config_from(s, vocab.size()), config.seed);
  }();

  AdamW optimizer(AdamWConfig{config.learning_rate, config.weight_decay, 0.9f,
                              0.999f, 1e-8f});
  TrainingMeta meta;
  meta.seed = config.seed;
  std::vector<double> losses = posttrain_mlm(model, optimizer, meta, vocab,
                                             corpus, config, stage_out, &log);
  save_checkpoint(stage_out + "/model.ckpt", model, nullptr, meta);
  char line[96];
  std::snprintf(line, sizeof(line), "%s: %lld epochs, final loss %.6f -> %s\n",
                section.c_str(),
                static_cast<long long>(meta.epochs_completed),
                losses.empty() ? 0.0 : losses.back(), stage_out.c_str());
  out << line;
}

void cmd_finetune(const Settings& s, std::ostream& out) {
  Vocabulary vocab = load_vocab_for(s, "finetune");
  LabeledDataset ds = load_dataset_with_splits(s);
  TrainConfig config = train_config_from(
      s, "finetune",
      TrainConfig::preset(
          s.get_string("finetune", "preset", "finetune-sentiment")));
  std::string stage_out = s.get_string("finetune", "out", out_dir(s) + "/finetune");
  std::ofstream log = open_log(stage_out, "train.log");

  EncoderModel model = model_from_checkpoint(
      read_checkpoint(s.require_string("finetune", "checkpoint")));
  std::vector<FinetuneEpoch> history =
      finetune_classifier(model, vocab, ds, ds.train, ds.val, config,
                          ds.num_labels(), &log);

  TrainingMeta meta;
  meta.epochs_completed = config.epochs;
  meta.seed = config.seed;
  for (const FinetuneEpoch& e : history) meta.loss_history.push_back(e.train_loss);
  save_checkpoint(stage_out + "/model.ckpt", model, nullptr, meta);

  const FinetuneEpoch& last = history.back();
  char line[128];
  if (last.has_val) {
    std::snprintf(line, sizeof(line),
                  "finetune: %d epochs, train loss %.6f, val loss %.6f -> %s\n",
                  config.epochs, last.train_loss, last.val_loss,
                  stage_out.c_str());
  } else {
    std::snprintf(line, sizeof(line),
                  "finetune: %d epochs, train loss %.6f -> %s\n", config.epochs,
                  last.train_loss, stage_out.c_str());
  }
  out << line;
}

void cmd_sweep(const Settings& s, std::ostream& out) {
  Vocabulary vocab = load_vocab_for(s, "sweep");
  LabeledDataset ds = load_dataset_with_splits(s);

  SweepPlan plan;
  plan.task = s.get_string("sweep", "task", "sentiment");
  plan.arch = s.get_string("sweep", "arch", s.get_string("model", "preset", "tiny"));
  plan.num_labels = ds.num_labels();
  plan.eval_batch_size =
      static_cast<int>(s.get_int("sweep", "eval_batch_size", 32));
  plan.finetune = train_config_from(
      s, "finetune",
      TrainConfig::preset(
          s.get_string("finetune", "preset", "finetune-sentiment")));

  for (const std::string& spec : s.get_list("sweep", "variants", {})) {
    size_t colon = spec.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("sweep.variants: expected name:checkpoint, got '" +
                        spec + "'");
    }
    plan.variants.push_back({spec.substr(0, colon), spec.substr(colon + 1)});
  }
  for (const std::string& f : s.get_list(
           "sweep", "fractions",
           {"100", "90", "80", "70", "60", "50", "40", "30", "20", "10"})) {
    try {
      size_t used = 0;
      int pct = std::stoi(f, &used);
      if (used != f.size()) throw std::invalid_argument(f);
      plan.fractions_pct.push_back(pct);
    } catch (const std::exception&) {
      throw ConfigError("sweep.fractions: bad percentage '" + f + "'");
    }
  }
  for (const std::string& seed : s.get_list("sweep", "seeds", {"1", "2", "3"})) {
    try {
      size_t used = 0;
      uint64_t value = std::stoull(seed, &used);
      if (used != seed.size()) throw std::invalid_argument(seed);
      plan.seeds.push_back(value);
    } catch (const std::exception&) {
      throw ConfigError("sweep.seeds: bad seed '" + seed + "'");
    }
  }

  std::string results =
      s.get_string("sweep", "results", out_dir(s) + "/sweep/results.tsv");
  fs::create_directories(fs::path(results).parent_path());
  ResultsStore store(results);
  std::vector<SweepResult> rows =
      run_sweep(plan, vocab, ds, store, &out,
                static_cast<int>(s.get_int("sweep", "workers", 1)));
  out << "sweep: " << rows.size() << " result rows in " << results << "\n";
}

void cmd_evaluate(const Settings& s, std::ostream& out) {
  Vocabulary vocab = load_vocab_for(s, "evaluate");
  LabeledDataset ds = load_dataset_with_splits(s);
  EncoderModel model = model_from_checkpoint(
      read_checkpoint(s.require_string("evaluate", "checkpoint")));

  std::string split = s.get_string("evaluate", "split", "test");
  const std::vector<int64_t>* indices = nullptr;
  if (split == "train") indices = &ds.train;
  else if (split == "val") indices = &ds.val;
  else if (split == "test") indices = &ds.test;
  else {
    throw ConfigError("evaluate.split: expected train, val, or test, got '" +
                      split + "'");
  }
  if (indices->empty()) {
    throw DataError("evaluate: split '" + split + "' is empty");
  }

  MetricsRecord m = evaluate_model(
      model, vocab, ds, *indices,
      static_cast<int>(s.get_int("evaluate", "max_len", 128)),
      static_cast<int>(s.get_int("evaluate", "batch_size", 32)));
  char line[160];
  std::snprintf(line, sizeof(line),
                "%s: macro_f1 %.4f  weighted_f1 %.4f  accuracy %.4f  (%zu "
                "examples)\n",
                split.c_str(), m.macro_f1, m.weighted_f1, m.accuracy,
                indices->size());
  out << line;
  for (size_t c = 0; c < m.per_class.size(); ++c) {
    const ClassMetrics& cm = m.per_class[c];
    std::string name = c < static_cast<size_t>(ds.num_labels())
                           ? ds.label_names[c]
                           : std::to_string(c);
    std::snprintf(line, sizeof(line),
                  "  %-16s precision %.4f  recall %.4f  f1 %.4f  support %lld\n",
                  name.c_str(), cm.precision, cm.recall, cm.f1,
                  static_cast<long long>(cm.gold_support));
    out << line;
  }
}

void cmd_report(const Settings& s, std::ostream& out) {
  std::string results =
      s.get_string("report", "results",
                   s.get_string("sweep", "results",
                                out_dir(s) + "/sweep/results.tsv"));
  if (!file_exists(results)) {
    throw DataError("report: results store '" + results + "' does not exist");
  }
  ResultsStore store(results);

  ReportOptions options;
  options.baseline_variant = s.get_string("report", "baseline", "baseline");
  options.score_field = s.get_string("report", "score", "macro_f1");
  options.task = s.get_string("report", "task", "");
  options.arch = s.get_string("report", "arch", "");

  RenderedReport report = render_report(store.rows(), options);
  write_file(s.get_string("report", "out_text", out_dir(s) + "/report.txt"),
             report.text);
  write_file(s.get_string("report", "out_tsv", out_dir(s) + "/report.tsv"),
             report.tsv);
  out << report.text;
}

void cmd_stats(const Settings& s, std::ostream& out) {
  std::vector<CorpusSection> sections;
  for (const std::string& spec : s.get_list("stats", "corpora", {})) {
    std::vector<std::string> parts = split(spec, ':');
    if (parts.size() != 3) {
      throw ConfigError("stats.corpora: expected name:style:path, got '" +
                        spec + "'");
    }
    CorpusSection section;
    section.name = trim(parts[0]);
    section.style = parse_style_tag(trim(parts[1]));
    section.stats = corpus_stats(read_lines(trim(parts[2])));
    sections.push_back(std::move(section));
  }
  if (sections.empty()) {
    throw ConfigError("stats: no corpora configured (stats.corpora)");
  }
  std::string table = render_stats_table(sections);
  write_file(s.get_string("stats", "out", out_dir(s) + "/stats.txt"), table);
  out << table;
}

}  // namespace

std::vector<std::string> known_commands() {
  return {"clean-corpus", "train-tokenizer", "pretrain", "posttrain",
          "finetune", "sweep", "evaluate", "report", "stats"};
}

void run_command(const std::string& command, Settings& settings,
                 std::ostream& out) {
  settings.require_known(kKnownKeys);
  fs::create_directories(out_dir(settings));
  auto start = std::chrono::steady_clock::now();

  if (command == "clean-corpus") cmd_clean_corpus(settings, out);
  else if (command == "train-tokenizer") cmd_train_tokenizer(settings, out);
  else if (command == "pretrain") run_mlm_stage(settings, out, "pretrain");
  else if (command == "posttrain") run_mlm_stage(settings, out, "posttrain");
  else if (command == "finetune") cmd_finetune(settings, out);
  else if (command == "sweep") cmd_sweep(settings, out);
  else if (command == "evaluate") cmd_evaluate(settings, out);
  else if (command == "report") cmd_report(settings, out);
  else if (command == "stats") cmd_stats(settings, out);
  else {
    throw ConfigError("unknown command '" + command + "'");
  }

  double elapsed = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  write_manifest(settings, command, elapsed);
}

}  // namespace dapt
