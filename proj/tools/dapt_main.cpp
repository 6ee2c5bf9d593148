// Command-line front end. Parses flags into dotted settings keys and drives
// the pipeline exclusively through the public C interface.
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "dapt/dapt.h"

namespace {

// Options collected for one subcommand, applied to the context after parsing.
struct Pending {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> options;  // dotted key, value
};

std::string join_commas(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    out += items[i];
  }
  return out;
}

void bind_value(CLI::App* sub, Pending& p, const std::string& flag,
                std::string key, const std::string& desc) {
  sub->add_option_function<std::string>(
      flag,
      [&p, key = std::move(key)](const std::string& v) {
        p.options.emplace_back(key, v);
      },
      desc);
}

void bind_int(CLI::App* sub, Pending& p, const std::string& flag,
              std::string key, const std::string& desc) {
  sub->add_option_function<long long>(
      flag,
      [&p, key = std::move(key)](const long long& v) {
        p.options.emplace_back(key, std::to_string(v));
      },
      desc);
}

void bind_u64(CLI::App* sub, Pending& p, const std::string& flag,
              std::string key, const std::string& desc) {
  sub->add_option_function<unsigned long long>(
      flag,
      [&p, key = std::move(key)](const unsigned long long& v) {
        p.options.emplace_back(key, std::to_string(v));
      },
      desc);
}

void bind_real(CLI::App* sub, Pending& p, const std::string& flag,
               std::string key, const std::string& desc) {
  sub->add_option_function<double>(
      flag,
      [&p, key = std::move(key)](const double& v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        p.options.emplace_back(key, buf);
      },
      desc);
}

void bind_list(CLI::App* sub, Pending& p, const std::string& flag,
               std::string key, const std::string& desc) {
  sub->add_option_function<std::vector<std::string>>(
          flag,
          [&p, key = std::move(key)](const std::vector<std::string>& items) {
            p.options.emplace_back(key, join_commas(items));
          },
          desc)
      ->delimiter(',');
}

Pending& add_common(CLI::App* sub, std::map<CLI::App*, Pending>& table) {
  Pending& p = table[sub];
  sub->add_option_function<std::string>(
      "--config", [&p](const std::string& v) { p.config_path = v; },
      "sectioned key=value config file; flags override file values");
  bind_value(sub, p, "--out-dir", "paths.out_dir",
             "output directory (default: $DAPT_OUT_DIR or ./out)");
  sub->add_option_function<std::vector<std::string>>(
      "--set",
      [&p](const std::vector<std::string>& kvs) {
        for (const std::string& kv : kvs) {
          size_t eq = kv.find('=');
          if (eq == std::string::npos || eq == 0) {
            throw CLI::ValidationError(
                "--set", "expected section.key=value, got '" + kv + "'");
          }
          p.options.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
      },
      "override any setting as section.key=value (repeatable)");
  return p;
}

void bind_train_flags(CLI::App* sub, Pending& p, const std::string& section) {
  bind_int(sub, p, "--epochs", section + ".epochs", "training epochs");
  bind_int(sub, p, "--batch-size", section + ".batch_size", "examples per step");
  bind_real(sub, p, "--learning-rate", section + ".learning_rate",
            "optimizer learning rate");
  bind_real(sub, p, "--weight-decay", section + ".weight_decay",
            "decoupled weight decay");
  bind_u64(sub, p, "--seed", section + ".seed", "run seed");
  bind_int(sub, p, "--max-len", section + ".max_len",
           "token sequence length (with [CLS]/[SEP] framing)");
  bind_value(sub, p, "--out", section + ".out", "stage output directory");
}

int exit_code_for(dapt_status status) {
  switch (status) {
    case DAPT_OK:
      return 0;
    case DAPT_ERR_USAGE:
      return 1;
    case DAPT_ERR_CONFIG:
    case DAPT_ERR_DATA:
      return 2;
    default:
      return 3;
  }
}

int report_failure(dapt_status status) {
  std::fprintf(stderr, "dapt: error: %s\n", dapt_last_error());
  return exit_code_for(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"domain-adaptive post-training pipeline for encoder models"};
  app.set_version_flag("--version", dapt_version());
  app.require_subcommand(0, 1);
  std::map<CLI::App*, Pending> pending;

  CLI::App* clean = app.add_subcommand(
      "clean-corpus", "clean raw documents into one sentence-per-line corpus");
  {
    Pending& p = add_common(clean, pending);
    bind_value(clean, p, "--input-dir", "clean.input_dir",
               "directory of raw documents (every regular file)");
    bind_list(clean, p, "--input", "clean.input_files",
              "raw document file (repeatable; overrides --input-dir)");
    bind_value(clean, p, "--style", "clean.style",
               "corpus style tag: mixed | formal");
    bind_value(clean, p, "--output", "clean.output", "cleaned corpus file");
    bind_int(clean, p, "--min-sentence-words", "clean.min_sentence_words",
             "drop sentences shorter than this many words");
  }

  CLI::App* tok = app.add_subcommand("train-tokenizer",
                                     "learn a WordPiece vocabulary");
  {
    Pending& p = add_common(tok, pending);
    bind_list(tok, p, "--corpus", "tokenizer.corpus",
              "sentence-per-line corpus file (repeatable)");
    bind_int(tok, p, "--vocab-size", "tokenizer.vocab_size",
             "target vocabulary size");
    bind_int(tok, p, "--min-frequency", "tokenizer.min_frequency",
             "minimum pair count for a merge");
    bind_value(tok, p, "--lowercase", "tokenizer.lowercase",
               "lowercase ASCII before segmenting (true|false)");
    bind_value(tok, p, "--output", "tokenizer.output", "vocabulary file");
  }

  CLI::App* pretrain = app.add_subcommand(
      "pretrain", "masked-language-model training from random initialization");
  {
    Pending& p = add_common(pretrain, pending);
    bind_list(pretrain, p, "--corpus", "pretrain.corpus",
              "training corpus file (repeatable)");
    bind_value(pretrain, p, "--vocab", "pretrain.vocab", "vocabulary file");
    bind_value(pretrain, p, "--preset", "model.preset",
               "architecture preset: tiny | base | large");
    bind_real(pretrain, p, "--mlm-probability", "pretrain.mlm_probability",
              "fraction of content tokens selected for prediction");
    bind_train_flags(pretrain, p, "pretrain");
  }

  CLI::App* posttrain = app.add_subcommand(
      "posttrain", "continue masked-language-model training from a checkpoint");
  {
    Pending& p = add_common(posttrain, pending);
    bind_list(posttrain, p, "--corpus", "posttrain.corpus",
              "domain corpus file (repeatable)");
    bind_value(posttrain, p, "--vocab", "posttrain.vocab", "vocabulary file");
    bind_value(posttrain, p, "--init-checkpoint", "posttrain.init_checkpoint",
               "starting model (fresh optimizer)");
    bind_value(posttrain, p, "--resume", "posttrain.resume",
               "epoch checkpoint to resume from (restores optimizer state)");
    bind_real(posttrain, p, "--mlm-probability", "posttrain.mlm_probability",
              "fraction of content tokens selected for prediction");
    bind_train_flags(posttrain, p, "posttrain");
  }

  CLI::App* finetune = app.add_subcommand(
      "finetune", "train a classification head on a labeled dataset");
  {
    Pending& p = add_common(finetune, pending);
    bind_value(finetune, p, "--dataset", "dataset.path",
               "labeled dataset (CSV with sidecar files)");
    bind_value(finetune, p, "--vocab", "finetune.vocab", "vocabulary file");
    bind_value(finetune, p, "--checkpoint", "finetune.checkpoint",
               "encoder checkpoint to start from");
    bind_value(finetune, p, "--preset", "finetune.preset",
               "training preset: finetune-sentiment | finetune-indofinsent | "
               "finetune-topic");
    bind_train_flags(finetune, p, "finetune");
  }

  CLI::App* sweep = app.add_subcommand(
      "sweep", "fine-tune variants across training-data fractions");
  {
    Pending& p = add_common(sweep, pending);
    bind_value(sweep, p, "--dataset", "dataset.path",
               "labeled dataset (CSV with sidecar files)");
    bind_value(sweep, p, "--vocab", "sweep.vocab", "vocabulary file");
    bind_value(sweep, p, "--task", "sweep.task", "task name for result rows");
    bind_value(sweep, p, "--arch", "sweep.arch",
               "architecture name for result rows");
    bind_list(sweep, p, "--variant", "sweep.variants",
              "model variant as name:checkpoint (repeatable)");
    bind_list(sweep, p, "--fractions", "sweep.fractions",
              "training-data percentages, e.g. 100,50,10");
    bind_list(sweep, p, "--seeds", "sweep.seeds",
              "fine-tuning seeds (one full grid per seed)");
    bind_value(sweep, p, "--results", "sweep.results",
               "append-only results file (resumable)");
    bind_int(sweep, p, "--workers", "sweep.workers",
             "concurrent sweep cells (1 = fully deterministic order)");
  }

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "score a fine-tuned model on a dataset split");
  {
    Pending& p = add_common(evaluate, pending);
    bind_value(evaluate, p, "--dataset", "dataset.path",
               "labeled dataset (CSV with sidecar files)");
    bind_value(evaluate, p, "--vocab", "evaluate.vocab", "vocabulary file");
    bind_value(evaluate, p, "--checkpoint", "evaluate.checkpoint",
               "fine-tuned model checkpoint");
    bind_value(evaluate, p, "--split", "evaluate.split",
               "dataset split: train | val | test");
    bind_int(evaluate, p, "--batch-size", "evaluate.batch_size",
             "examples per forward pass");
    bind_int(evaluate, p, "--max-len", "evaluate.max_len",
             "token sequence length");
  }

  CLI::App* report = app.add_subcommand(
      "report", "render sweep results as a baseline-delta table");
  {
    Pending& p = add_common(report, pending);
    bind_value(report, p, "--results", "report.results", "sweep results file");
    bind_value(report, p, "--baseline", "report.baseline",
               "variant name deltas are measured against");
    bind_value(report, p, "--score", "report.score",
               "score column: macro_f1 | weighted_f1 | accuracy");
    bind_value(report, p, "--task", "report.task", "only rows for this task");
    bind_value(report, p, "--arch", "report.arch", "only rows for this arch");
    bind_value(report, p, "--out-text", "report.out_text",
               "aligned table output file");
    bind_value(report, p, "--out-tsv", "report.out_tsv",
               "machine-readable output file");
  }

  CLI::App* stats = app.add_subcommand(
      "stats", "word/byte/sentence statistics for cleaned corpora");
  {
    Pending& p = add_common(stats, pending);
    bind_list(stats, p, "--corpus", "stats.corpora",
              "corpus as name:style:path (repeatable)");
    bind_value(stats, p, "--output", "stats.out", "statistics table file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::vector<CLI::App*> chosen = app.get_subcommands();
  if (chosen.empty()) {
    std::fputs(app.help().c_str(), stderr);
    return 1;
  }
  CLI::App* sub = chosen.front();
  Pending& p = pending[sub];

  dapt_context* ctx = nullptr;
  dapt_status status = dapt_context_create(&ctx);
  if (status != DAPT_OK) return report_failure(status);

  if (!p.config_path.empty()) {
    status = dapt_context_load_config(ctx, p.config_path.c_str());
    if (status != DAPT_OK) {
      dapt_context_destroy(ctx);
      return report_failure(status);
    }
  }
  for (const auto& [key, value] : p.options) {
    status = dapt_context_set_option(ctx, key.c_str(), value.c_str());
    if (status != DAPT_OK) {
      dapt_context_destroy(ctx);
      return report_failure(status);
    }
  }

  status = dapt_context_run(ctx, sub->get_name().c_str());
  dapt_context_destroy(ctx);
  return status == DAPT_OK ? 0 : report_failure(status);
}
