// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

// Exercises the pretrained backend against a tiny randomly initialised BERT
// written to a temp directory. Exits with 77 (skip) when the Python runtime
// lacks torch or transformers.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "support/fixtures.hpp"
#include "tapd/backends.hpp"
#include "tapd/error.hpp"

using namespace tapd;

namespace {

encoder::PretrainedOptions options() {
  encoder::PretrainedOptions o;
  o.server_script = std::filesystem::path(TAPD_SOURCE_DIR) / "tools" / "hf_encoder_server.py";
  o.dtype = "float64";
  return o;
}

/// Tiny BertForMaskedLM whose vocabulary covers the keyword corpus.
struct TinyModel {
  testing::TempDir dir{"bert"};
  corpus::SplitSpec split = testing::keyword_split();

  TinyModel() {
    const auto stub_vocab = testing::tokenizer_for(split)->vocabulary();
    {
      std::ofstream vocab(dir.path() / "vocab.txt");
      for (const auto& t : stub_vocab) vocab << t << "\n";
    }
    const auto script = dir.path() / "make.py";
    {
      std::ofstream py(script);
      py << "import sys, torch\n"
            "from transformers import BertConfig, BertForMaskedLM, BertTokenizer\n"
            "d = sys.argv[1]\n"
            "tok = BertTokenizer(d + '/vocab.txt', do_lower_case=True)\n"
            "torch.manual_seed(0)\n"
            "cfg = BertConfig(vocab_size=len(tok.vocab), hidden_size=16, num_hidden_layers=1,\n"
            "                 num_attention_heads=2, intermediate_size=32, max_position_embeddings=64)\n"
            "BertForMaskedLM(cfg).save_pretrained(d)\n"
            "tok.save_pretrained(d)\n";
    }
    const std::string cmd = "python3 " + script.string() + " " + dir.path().string() + " > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) throw Error("could not build the tiny test model");
  }
};

TinyModel& tiny() {
  static TinyModel model;
  return model;
}

}  // namespace

TEST_CASE("the tokenizer comes from the model vocabulary") {
  auto& m = tiny();
  const auto loaded = encoder::load_pretrained(m.dir.path().string(), options());
  CHECK(loaded.tokenizer->vocabulary() == testing::tokenizer_for(m.split)->vocabulary());
  CHECK(loaded.encoder->spec().d_h == 16);
  CHECK(loaded.encoder->spec().mask_token_id == loaded.tokenizer->mask_id());
}

TEST_CASE("encode is shaped, deterministic and consistent with label scores") {
  auto& m = tiny();
  const auto loaded = encoder::load_pretrained(m.dir.path().string(), options());
  const auto pattern = prompts::PromptPattern::builtin("P1");
  std::vector<prompts::PromptInstance> batch;
  for (std::size_t i = 0; i < 3; ++i) batch.push_back(prompts::render(pattern, m.split.test[i], *loaded.tokenizer, 48));
  const encoder::LabelWords words{loaded.tokenizer->id("yes"), loaded.tokenizer->id("maybe"), loaded.tokenizer->id("no")};
  const auto a = loaded.encoder->encode(batch, &words);
  const auto b = loaded.encoder->encode(batch, &words);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].hidden.rows() == static_cast<Eigen::Index>(batch[i].token_ids.size()));
    CHECK(a[i].hidden.cols() == 16);
    CHECK(a[i].hidden == b[i].hidden);
    const auto all =
        loaded.encoder->token_output_scores(a[i].hidden.row(static_cast<Eigen::Index>(batch[i].mask_index)).transpose());
    for (std::size_t j = 0; j < 3; ++j) CHECK((*a[i].label_scores)[j] == doctest::Approx(all(words[j])).epsilon(1e-9));
  }
}

TEST_CASE("a short training run lowers the loss and checkpoints round-trip") {
  auto& m = tiny();
  auto loaded = encoder::load_pretrained(m.dir.path().string(), options());
  std::shared_ptr<const encoder::Encoder> base = std::move(loaded.encoder);
  auto config = testing::quick_config(4);
  config.learning_rate = 1e-3;
  config.d_m = 16;
  corpus::SplitSpec small;
  small.train = corpus::Dataset("train", std::vector(m.split.train.examples().begin(), m.split.train.examples().begin() + 48));
  const prompts::PatternRegistry reg;
  trainer::Stage s;
  s.seed = 1;
  s.model = trainer::base_model_factory(loaded.tokenizer, base, config)(reg.get("P2"), s.seed);
  const auto ckpt = trainer::train_stage(std::move(s), small, config);
  CHECK(ckpt.history.back().train_loss < ckpt.history.front().train_loss);

  testing::TempDir dir("pretrained-ckpt");
  trainer::save_checkpoint(ckpt, dir.path() / "stage.ckpt");
  const auto back = trainer::load_checkpoint(dir.path() / "stage.ckpt");
  const auto ex = std::span(m.split.test.examples()).first(10);
  const auto p = trainer::predict(*ckpt.model, ex);
  const auto q = trainer::predict(*back.model, ex);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i].label == q[i].label);
    for (int k = 0; k < 3; ++k) CHECK(p[i].distribution.probs[k] == doctest::Approx(q[i].distribution.probs[k]).epsilon(1e-12));
  }
}

TEST_CASE("an unknown model identifier fails cleanly") {
  CHECK_THROWS_AS(encoder::load_pretrained("/nonexistent/model/dir", options()), Error);
}

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  if (!encoder::pretrained_runtime_available(options())) {
    std::cout << "pretrained runtime unavailable; skipping\n";
    return 77;
  }
  return doctest::Context(argc, argv).run();
}
