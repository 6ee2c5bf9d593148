#include "dapt/dapt.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <ostream>
#include <streambuf>
#include <string>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/model.hpp"
#include "core/pipeline.hpp"
#include "core/util.hpp"
#include "core/wordpiece.hpp"

namespace {

thread_local std::string g_last_error;

dapt_status fail(dapt_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs `body`, translating exceptions into status codes plus the
// thread-local error message.
template <typename Fn>
dapt_status guarded(Fn&& body) {
  try {
    body();
    return DAPT_OK;
  } catch (const dapt::ConfigError& e) {
    return fail(DAPT_ERR_CONFIG, e.what());
  } catch (const dapt::DataError& e) {
    return fail(DAPT_ERR_DATA, e.what());
  } catch (const std::exception& e) {
    return fail(DAPT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DAPT_ERR_INTERNAL, "unknown exception");
  }
}

// dapt_free() uses free(), so returned buffers must come from malloc.
char* alloc_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_stdout(const char* text, size_t len, void*) {
  std::fwrite(text, 1, len, stdout);
  std::fflush(stdout);
}

// Forwards stream output to the context's writer callback.
class CallbackBuf : public std::streambuf {
 public:
  CallbackBuf(dapt_write_fn fn, void* user_data)
      : fn_(fn), user_data_(user_data) {}

 protected:
  int overflow(int ch) override {
    if (ch != traits_type::eof()) {
      char c = static_cast<char>(ch);
      fn_(&c, 1, user_data_);
    }
    return ch;
  }
  std::streamsize xsputn(const char* s, std::streamsize n) override {
    fn_(s, static_cast<size_t>(n), user_data_);
    return n;
  }

 private:
  dapt_write_fn fn_;
  void* user_data_;
};

}  // namespace

struct dapt_context {
  dapt::Settings settings;
  dapt_write_fn writer = write_stdout;
  void* writer_data = nullptr;
};

struct dapt_vocab {
  dapt::Vocabulary vocab;
};

struct dapt_model {
  explicit dapt_model(dapt::EncoderModel m) : model(std::move(m)) {}
  dapt::EncoderModel model;
};

extern "C" {

const char* dapt_version(void) { return dapt::kVersionString; }

const char* dapt_last_error(void) { return g_last_error.c_str(); }

void dapt_free(void* ptr) { std::free(ptr); }

dapt_status dapt_context_create(dapt_context** out_ctx) {
  if (out_ctx == nullptr) return fail(DAPT_ERR_USAGE, "out_ctx is null");
  return guarded([&] {
    auto ctx = std::make_unique<dapt_context>();
    if (const char* dir = std::getenv("DAPT_OUT_DIR")) {
      if (*dir != '\0') ctx->settings.set_default("paths.out_dir", dir);
    }
    *out_ctx = ctx.release();
  });
}

void dapt_context_destroy(dapt_context* ctx) { delete ctx; }

dapt_status dapt_context_load_config(dapt_context* ctx, const char* path) {
  if (ctx == nullptr || path == nullptr) {
    return fail(DAPT_ERR_USAGE, "null argument to dapt_context_load_config");
  }
  return guarded(
      [&] { ctx->settings.adopt_file_layer(dapt::Settings::parse_file(path)); });
}

dapt_status dapt_context_set_option(dapt_context* ctx, const char* dotted_key,
                                    const char* value) {
  if (ctx == nullptr || dotted_key == nullptr || value == nullptr) {
    return fail(DAPT_ERR_USAGE, "null argument to dapt_context_set_option");
  }
  return guarded([&] { ctx->settings.set_override(dotted_key, value); });
}

dapt_status dapt_context_set_writer(dapt_context* ctx, dapt_write_fn fn,
                                    void* user_data) {
  if (ctx == nullptr) return fail(DAPT_ERR_USAGE, "ctx is null");
  ctx->writer = fn != nullptr ? fn : write_stdout;
  ctx->writer_data = fn != nullptr ? user_data : nullptr;
  return DAPT_OK;
}

dapt_status dapt_context_run(dapt_context* ctx, const char* command) {
  if (ctx == nullptr || command == nullptr) {
    return fail(DAPT_ERR_USAGE, "null argument to dapt_context_run");
  }
  std::vector<std::string> commands = dapt::known_commands();
  if (std::find(commands.begin(), commands.end(), command) == commands.end()) {
    return fail(DAPT_ERR_USAGE,
                std::string("unknown command '") + command + "'; expected " +
                    dapt::join(commands, " | "));
  }
  return guarded([&] {
    CallbackBuf buf(ctx->writer, ctx->writer_data);
    std::ostream out(&buf);
    dapt::run_command(command, ctx->settings, out);
    out.flush();
  });
}

dapt_status dapt_commands(char** out_text) {
  if (out_text == nullptr) return fail(DAPT_ERR_USAGE, "out_text is null");
  return guarded([&] {
    *out_text = alloc_string(dapt::join(dapt::known_commands(), "\n") + "\n");
  });
}

dapt_status dapt_vocab_open(const char* path, dapt_vocab** out_vocab) {
  if (path == nullptr || out_vocab == nullptr) {
    return fail(DAPT_ERR_USAGE, "null argument to dapt_vocab_open");
  }
  return guarded([&] {
    auto handle = std::make_unique<dapt_vocab>();
    handle->vocab = dapt::load_vocabulary(path);
    *out_vocab = handle.release();
  });
}

void dapt_vocab_close(dapt_vocab* vocab) { delete vocab; }

int32_t dapt_vocab_size(const dapt_vocab* vocab) {
  return vocab == nullptr ? -1 : static_cast<int32_t>(vocab->vocab.size());
}

dapt_status dapt_vocab_encode(const dapt_vocab* vocab, const char* text,
                              int32_t max_len, int32_t** out_ids,
                              int32_t* out_live_len) {
  if (vocab == nullptr || text == nullptr || out_ids == nullptr ||
      out_live_len == nullptr) {
    return fail(DAPT_ERR_USAGE, "null argument to dapt_vocab_encode");
  }
  return guarded([&] {
    dapt::TokenSequence seq = dapt::encode(vocab->vocab, text, max_len);
    auto* ids =
        static_cast<int32_t*>(std::malloc(sizeof(int32_t) * seq.ids.size()));
    if (ids == nullptr) throw std::bad_alloc();
    std::copy(seq.ids.begin(), seq.ids.end(), ids);
    *out_ids = ids;
    *out_live_len = seq.length;
  });
}

dapt_status dapt_vocab_decode(const dapt_vocab* vocab, const int32_t* ids,
                              int32_t count, char** out_text) {
  if (vocab == nullptr || (ids == nullptr && count != 0) ||
      out_text == nullptr || count < 0) {
    return fail(DAPT_ERR_USAGE, "bad argument to dapt_vocab_decode");
  }
  return guarded([&] {
    std::vector<int> id_vec(ids, ids + count);
    *out_text = alloc_string(dapt::decode(vocab->vocab, id_vec));
  });
}

dapt_status dapt_model_open(const char* path, dapt_model** out_model) {
  if (path == nullptr || out_model == nullptr) {
    return fail(DAPT_ERR_USAGE, "null argument to dapt_model_open");
  }
  return guarded([&] {
    dapt::Checkpoint cp = dapt::read_checkpoint(path);
    auto handle =
        std::make_unique<dapt_model>(dapt::model_from_checkpoint(std::move(cp)));
    *out_model = handle.release();
  });
}

void dapt_model_close(dapt_model* model) { delete model; }

int64_t dapt_model_parameter_count(const dapt_model* model) {
  return model == nullptr ? -1 : model->model.parameter_count();
}

dapt_status dapt_model_describe(const dapt_model* model, char** out_text) {
  if (model == nullptr || out_text == nullptr) {
    return fail(DAPT_ERR_USAGE, "null argument to dapt_model_describe");
  }
  return guarded([&] {
    *out_text = alloc_string(dapt::serialize_model_config(model->model.config()));
  });
}

}  // extern "C"
