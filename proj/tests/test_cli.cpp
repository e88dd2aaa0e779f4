// Copyright 2026 The DeskST Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the installed binary end to end through std::system. The heavier
// regime comparisons live in the acceptance runner; this suite checks the
// command surface: exit codes, output files, and the run.json contract.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = DESKST_CLI_PATH;

struct RunResult {
  int exit_code;
  std::string output;
};

// Runs the binary with stdout+stderr captured to a scratch file.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path log = fs::temp_directory_path() /
                 ("deskst_cli_log_" + std::to_string(counter++) + ".txt");
  std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  int code = -1;
  if (status != -1) code = WEXITSTATUS(status);
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  fs::remove(log);
  return RunResult{code, ss.str()};
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

}  // namespace

TEST_CASE("usage errors exit with status two") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("no-such-command").exit_code == 2);
  CHECK(run_cli("gen-data --out /tmp/x --frobnicate").exit_code == 2);
  CHECK(run_cli("translate --mode warp --manifest m --out o --src-bpe a "
                "--tgt-bpe b")
            .exit_code == 2);
}

TEST_CASE("help exits cleanly") {
  RunResult r = run_cli("--help");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("gen-data") != std::string::npos);
}

TEST_CASE("identical hypothesis and reference files score one hundred") {
  fs::path dir = fresh_dir("deskst_cli_eval");
  write_text(dir / "hyp.txt", "ka pa ra sa va\nsa va ka pa ra\n");
  write_text(dir / "ref.txt", "ka pa ra sa va\nsa va ka pa ra\n");
  RunResult r = run_cli("evaluate --metric bleu --hyp " +
                        (dir / "hyp.txt").string() + " --ref " +
                        (dir / "ref.txt").string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("BLEU = 100.00") != std::string::npos);

  std::ifstream in(dir / "hyp.txt.run.json");
  REQUIRE(in.good());
  json j = json::parse(in);
  CHECK(j["metric"] == "bleu");
  CHECK(j["value"].get<double>() == doctest::Approx(100.0));

  RunResult w = run_cli("evaluate --metric wer --hyp " +
                        (dir / "hyp.txt").string() + " --ref " +
                        (dir / "ref.txt").string());
  CHECK(w.exit_code == 0);
  CHECK(w.output.find("WER = 0.00") != std::string::npos);
}

TEST_CASE("evaluate rejects mismatched line counts") {
  fs::path dir = fresh_dir("deskst_cli_eval_bad");
  write_text(dir / "hyp.txt", "ka\n");
  write_text(dir / "ref.txt", "ka\npa\n");
  RunResult r = run_cli("evaluate --hyp " + (dir / "hyp.txt").string() +
                        " --ref " + (dir / "ref.txt").string());
  CHECK(r.exit_code == 1);
}

TEST_CASE("missing checkpoint is a runtime failure, not a crash") {
  fs::path dir = fresh_dir("deskst_cli_nockpt");
  write_text(dir / "m.tsv", "u-0\tnone.wav\tba\tka\n");
  RunResult r = run_cli("translate --mode greedy --model " +
                        (dir / "nope.ckpt").string() + " --manifest " +
                        (dir / "m.tsv").string() + " --out " +
                        (dir / "h.txt").string() + " --src-bpe x --tgt-bpe y");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("error") != std::string::npos);
}

TEST_CASE("corpus, codec, training, decoding, and scoring chain together") {
  fs::path dir = fresh_dir("deskst_cli_e2e");
  fs::path corpus = dir / "corpus";
  fs::path codec = dir / "codec";
  fs::create_directories(codec);

  RunResult gen = run_cli(
      "gen-data --out " + corpus.string() +
      " --symbols 6 --min-len 2 --max-len 4 --train 12 --dev 4 --test 4 "
      "--tone-ms 80 --noise 0.01 --seed 7");
  REQUIRE(gen.exit_code == 0);
  CHECK(fs::exists(corpus / "run.json"));
  CHECK(fs::exists(corpus / "train.tsv"));
  CHECK(fs::exists(corpus / "dev.tsv"));

  RunResult bsrc = run_cli("bpe-train --manifest " +
                           (corpus / "train.tsv").string() +
                           " --side src --merges 20 --out " +
                           (codec / "src").string());
  REQUIRE(bsrc.exit_code == 0);
  CHECK(fs::exists(codec / "src.bpe"));
  CHECK(fs::exists(codec / "src.vocab"));
  RunResult btgt = run_cli("bpe-train --manifest " +
                           (corpus / "train.tsv").string() +
                           " --side tgt --merges 20 --out " +
                           (codec / "tgt").string());
  REQUIRE(btgt.exit_code == 0);

  std::string data_flags = " --train " + (corpus / "train.tsv").string() +
                           " --dev " + (corpus / "dev.tsv").string() +
                           " --src-bpe " + (codec / "src").string() +
                           " --tgt-bpe " + (codec / "tgt").string();
  std::string tiny_model =
      " --d-model 16 --d-ff 32 --heads 2 --enc-layers 1 --dec-layers 1 "
      "--dropout 0 --budget 400 --warmup 10 --eval-every 0";

  SUBCASE("distillation without a teacher is a config error") {
    RunResult r = run_cli("train --regime st-kd" + data_flags + tiny_model +
                          " --max-steps 5 --out " + (dir / "kd").string());
    CHECK(r.exit_code == 2);
  }

  SUBCASE("translation model trains, decodes, and scores") {
    RunResult tr = run_cli("train --regime mt" + data_flags + tiny_model +
                           " --max-steps 60 --out " + (dir / "mt").string());
    REQUIRE(tr.exit_code == 0);
    REQUIRE(fs::exists(dir / "mt" / "last.ckpt"));
    REQUIRE(fs::exists(dir / "mt" / "run.json"));
    CHECK(fs::exists(dir / "mt" / "metrics.jsonl"));
    {
      std::ifstream in(dir / "mt" / "run.json");
      json j = json::parse(in);
      CHECK(j["config"]["regime"] == "mt");
      CHECK(j["config"]["seed"] == "1");
      CHECK(j["result"]["diverged"] == false);
    }

    RunResult tl = run_cli("translate --mode beam --beam 2 --model " +
                           (dir / "mt" / "last.ckpt").string() +
                           " --manifest " + (corpus / "dev.tsv").string() +
                           " --out " + (dir / "dev.hyp").string() +
                           " --src-bpe " + (codec / "src").string() +
                           " --tgt-bpe " + (codec / "tgt").string());
    REQUIRE(tl.exit_code == 0);
    REQUIRE(fs::exists(dir / "dev.hyp"));
    CHECK(fs::exists(dir / "dev.hyp.run.json"));
    {
      std::ifstream in(dir / "dev.hyp");
      std::string line;
      int n = 0;
      while (std::getline(in, line)) ++n;
      CHECK(n == 4);
    }

    RunResult ev = run_cli("evaluate --metric bleu --smooth --hyp " +
                           (dir / "dev.hyp").string() + " --manifest " +
                           (corpus / "dev.tsv").string() + " --side tgt");
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("BLEU = ") != std::string::npos);

    RunResult at = run_cli("attention-dump --model " +
                           (dir / "mt" / "last.ckpt").string() +
                           " --manifest " + (corpus / "dev.tsv").string() +
                           " --row 1 --out " + (dir / "attn").string() +
                           " --src-bpe " + (codec / "src").string() +
                           " --tgt-bpe " + (codec / "tgt").string());
    REQUIRE(at.exit_code == 0);
    bool saw_csv = false, saw_pgm = false;
    for (const auto& e : fs::directory_iterator(dir / "attn")) {
      if (e.path().extension() == ".csv") saw_csv = true;
      if (e.path().extension() == ".pgm") saw_pgm = true;
    }
    CHECK(saw_csv);
    CHECK(saw_pgm);
  }
}
