#include <doctest.h>

#include <fstream>
#include <sstream>

#include "charparse/checkpoint.hpp"
#include "charparse/cli.hpp"
#include "test_support.hpp"

using namespace charparse;
using testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "charparse");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Tiny model and a short schedule as a config file.
std::string write_config(const TempDir& dir, std::size_t layers = 2) {
  const auto path = (dir / "tiny.cfg").string();
  std::ofstream f(path);
  f << "encoder.layers = " << layers << "\nencoder.heads = 2\nencoder.d_model = 16\nencoder.d_ff = 32\n"
    << "encoder.max_seq_len = 32\nchar.emb_dim = 4\nchar.kernels = 1:4,2:4\nchar.highway = 1\n"
    << "subword.size = 80\nmlm.top_k = 50\nparser.word_dim = 8\nparser.tag_dim = 4\nparser.tagger_hidden = 8\n"
    << "parser.arc_dim = 8\nparser.label_dim = 4\ntrain.epochs = 1\ntrain.batch_size = 8\n";
  return path;
}

struct Data {
  TempDir dir{"cli"};
  std::string cfg = write_config(dir);
  std::string root = dir.path().string();
  Data() {
    REQUIRE(cli({"synth", "--out", root + "/data", "--corpus", "60", "--train", "12", "--dev", "6", "--test", "6"}).code == 0);
  }
  std::string data(const std::string& f) const { return root + "/data/" + f; }
};

}  // namespace

TEST_CASE("ablation layer sets follow the depth") {
  CHECK(ablation_layer_sets(4) == std::vector<std::string>{"0", "0-1", "1-2", "2-3", "3", "all"});
  CHECK(ablation_layer_sets(12) == std::vector<std::string>{"0", "0-5", "4-7", "6-11", "11", "all"});
  CHECK(ablation_layer_sets(2) == std::vector<std::string>{"0", "0", "1", "1", "1", "all"});
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"bogus"}).code == kExitUsage);
  CHECK(cli({"finetune", "--out", "/tmp/x"}).code == kExitUsage);
}

TEST_CASE("missing corpus exits 2 and names the path") {
  TempDir dir("cli_missing");
  const auto r = cli({"pretrain", "--corpus", "/nonexistent/corpus.txt", "--out", dir.path().string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("/nonexistent/corpus.txt") != std::string::npos);
}

TEST_CASE("finetune: layer and aggregation flags map onto the run") {
  Data d;
  SUBCASE("--layers 11 --agg last on a 12-block encoder") {
    const auto cfg = write_config(d.dir, 12);
    const auto r = cli({"finetune", "--config", cfg, "--train", d.data("train.conllu"), "--out", d.root + "/l11",
                        "--layers", "11", "--agg", "last"});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("fine-tuning last-layer-ft over layers 11") != std::string::npos);
  }
  SUBCASE("--layers 4-7 --agg mean --frozen") {
    const auto cfg = write_config(d.dir, 12);
    const auto r = cli({"finetune", "--config", cfg, "--train", d.data("train.conllu"), "--out", d.root + "/m47",
                        "--layers", "4-7", "--agg", "mean", "--frozen"});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("fine-tuning mean-fz over layers 4-7") != std::string::npos);
    const auto saved = slurp(d.root + "/m47/run.cfg");
    CHECK(saved.find("train.layers = 4-7") != std::string::npos);
  }
  SUBCASE("--layers 99 on a 4-block encoder") {
    const auto cfg = write_config(d.dir, 4);
    const auto r = cli({"finetune", "--config", cfg, "--train", d.data("train.conllu"), "--out", d.root + "/bad",
                        "--layers", "99"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("99") != std::string::npos);
  }
}

TEST_CASE("finetune writes predictions, scores and a reusable config") {
  Data d;
  const auto out = d.root + "/ft";
  const auto r = cli({"finetune", "--config", d.cfg, "--train", d.data("train.conllu"), "--dev", d.data("dev.conllu"),
                      "--test", d.data("test.conllu"), "--out", out, "--seed", "3", "--epochs", "2"});
  REQUIRE(r.code == 0);
  for (const char* f : {"metrics.tsv", "run.cfg", "dev_pred.conllu", "test_pred.conllu", "scores.tsv",
                        "checkpoint/manifest.json", "checkpoint/params.bin"}) {
    INFO(f);
    CHECK(std::filesystem::exists(out + "/" + f));
  }
  CHECK(slurp(out + "/scores.tsv").starts_with("system\tUPOS\tUAS\tLAS\ndev\t"));

  SUBCASE("re-running with the emitted config reproduces the metrics log") {
    const auto again = cli({"finetune", "--config", out + "/run.cfg", "--train", d.data("train.conllu"), "--dev",
                            d.data("dev.conllu"), "--out", d.root + "/ft2"});
    REQUIRE(again.code == 0);
    CHECK(slurp(d.root + "/ft2/metrics.tsv") == slurp(out + "/metrics.tsv"));
  }
  SUBCASE("parse with the fine-tuned checkpoint matches dev predictions") {
    const auto p = cli({"parse", "--checkpoint", out + "/checkpoint", "--in", d.data("dev.conllu"), "--out",
                        d.root + "/parsed.conllu"});
    REQUIRE(p.code == 0);
    CHECK(slurp(d.root + "/parsed.conllu") == slurp(out + "/dev_pred.conllu"));
  }
  SUBCASE("eval of gold against itself and a significance self-test") {
    const auto e = cli({"eval", "--gold", d.data("dev.conllu"), "--pred", d.data("dev.conllu")});
    REQUIRE(e.code == 0);
    CHECK(e.out == "100.00/100.00/100.00\n");
    const auto s = cli({"eval", "--gold", d.data("dev.conllu"), "--significance", out + "/dev_pred.conllu",
                        out + "/dev_pred.conllu", "--trials", "500"});
    REQUIRE(s.code == 0);
    CHECK(s.out.find("p=1.0000") != std::string::npos);
  }
}

TEST_CASE("same seed twice gives identical metrics") {
  Data d;
  for (const char* name : {"a", "b"}) {
    REQUIRE(cli({"finetune", "--config", d.cfg, "--train", d.data("train.conllu"), "--dev", d.data("dev.conllu"),
                 "--out", d.root + "/" + name, "--seed", "7"})
                .code == 0);
  }
  CHECK(slurp(d.root + "/a/metrics.tsv") == slurp(d.root + "/b/metrics.tsv"));
}

TEST_CASE("pretrain then frozen and fine-tuned adaptation from its checkpoint") {
  Data d;
  REQUIRE(cli({"pretrain", "--config", d.cfg, "--corpus", d.data("raw.txt"), "--out", d.root + "/pre"}).code == 0);
  const auto metrics = slurp(d.root + "/pre/metrics.tsv");
  CHECK(metrics.starts_with("epoch\ttrain_loss\tdev_metric\n0\t-\t"));
  const auto ckpt = d.root + "/pre/checkpoint";
  const auto enc = parameter_bytes(load_checkpoint(ckpt).params(), Model::is_encoder_param);
  for (bool frozen : {true, false}) {
    const auto out = d.root + (frozen ? "/fz" : "/ft");
    std::vector<std::string> args{"finetune", "--config", d.cfg, "--checkpoint", ckpt, "--train",
                                  d.data("train.conllu"), "--out", out};
    if (frozen) args.push_back("--frozen");
    REQUIRE(cli(args).code == 0);
    const auto after = parameter_bytes(load_checkpoint(out + "/checkpoint").params(), Model::is_encoder_param);
    if (frozen) CHECK(after == enc);
    else CHECK(after != enc);
  }
  const auto mismatch = cli({"finetune", "--config", d.cfg, "--checkpoint", ckpt, "--pipeline", "subword", "--train",
                             d.data("train.conllu"), "--out", d.root + "/mm"});
  CHECK(mismatch.code != 0);
  CHECK(mismatch.err.find("config mismatch") != std::string::npos);
}

TEST_CASE("noise is deterministic and records its rules") {
  Data d;
  for (const char* name : {"n1.conllu", "n2.conllu"}) {
    REQUIRE(cli({"noise", "--in", d.data("dev.conllu"), "--out", d.root + "/" + name, "--seed", "4"}).code == 0);
  }
  CHECK(slurp(d.root + "/n1.conllu") == slurp(d.root + "/n2.conllu"));
  CHECK(slurp(d.root + "/n1.conllu") != slurp(d.data("dev.conllu")));
  CHECK(std::filesystem::exists(d.root + "/n1.conllu.rules"));
  const auto e = cli({"eval", "--gold", d.data("dev.conllu"), "--pred", d.root + "/n1.conllu"});
  CHECK(e.out == "100.00/100.00/100.00\n");
}

TEST_CASE("stats prints counts and coverage") {
  Data d;
  const auto r = cli({"stats", "--corpus", d.data("raw.txt"), "--top-k", "3", "--subword-size", "100"});
  REQUIRE(r.code == 0);
  CHECK(r.out.starts_with("sentences\t60\n"));
  CHECK(r.out.find("rank\tword\tcount\n1\t") != std::string::npos);
  CHECK(r.out.find("coverage") != std::string::npos);
}

TEST_CASE("ablate fills both grids") {
  Data d;
  const auto r = cli({"ablate", "--config", d.cfg, "--train", d.data("train.conllu"), "--dev", d.data("dev.conllu"),
                      "--out", d.root + "/abl"});
  REQUIRE(r.code == 0);
  const auto strategies = slurp(d.root + "/abl/strategies.tsv");
  for (const char* name : {"last-layer-ft", "last-layer-fz", "mean-ft", "mean-fz", "scalar-mix-ft", "scalar-mix-fz"}) {
    INFO(name);
    CHECK(strategies.find(std::string("\n") + name + "\t") != std::string::npos);
  }
  const auto layers = slurp(d.root + "/abl/layers.tsv");
  std::size_t rows = 0;
  for (char c : layers) rows += c == '\n';
  CHECK(rows == 7);
  CHECK(layers.find("\nall\t") != std::string::npos);
  CHECK(std::filesystem::exists(d.root + "/abl/cell11/metrics.tsv"));
}
