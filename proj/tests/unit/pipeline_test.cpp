// tests/unit/pipeline_test.cpp

// Copyright 2026  The spkv Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "doctest.h"

#include "spkv/error.hpp"
#include "spkv/pipeline.hpp"
#include "unit/util.hpp"

#include <cstdlib>
#include <sstream>

using namespace spkv;
using namespace spkv::cli;
namespace fs = std::filesystem;

namespace {

// Synthetic inputs shared by every case of the suite.
const fs::path& inputs() {
  static const fs::path dir = [] {
    auto d = testing::scratch_dir("pipeline-inputs");
    write_synthetic_inputs(d, {3, 0});
    return d;
  }();
  return dir;
}

PipelineConfig config(const std::string& extra = "") {
  return parse_config(io::read_text_file(inputs() / "config.ini") + "\n[global]\n" + extra, "config.ini", inputs());
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = io::read_text_file(e.path());
  return out;
}

// `system=<name> EER=<x> ...` lines of metrics.txt.
std::map<std::string, double> eers(const fs::path& run) {
  std::map<std::string, double> out;
  std::istringstream in(io::read_text_file(run / "metrics.txt"));
  std::string sys, eer;
  while (in >> sys >> eer) {
    std::string rest;
    in >> rest;
    out[sys.substr(7)] = std::stod(eer.substr(4));
  }
  return out;
}

int spkv_cli(const std::string& args) {
  const std::string cmd = std::string(SPKV_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("dry run prints the plan and writes nothing") {
  const auto out = testing::scratch_dir("pipeline-dry") / "run";
  const auto plan = run_pipeline(config(), out, true);
  CHECK_FALSE(fs::exists(out));
  std::vector<std::string> names;
  for (const auto& s : plan) names.push_back(s.name);
  CHECK(names == std::vector<std::string>{"score", "asnorm", "calibrate", "score", "asnorm", "calibrate", "score",
                                          "asnorm", "calibrate", "fuse", "metrics"});
  CHECK(format_plan(plan).find("10. fuse (3 systems, learned weights)") != std::string::npos);

  const auto joint = run_pipeline(config("pipeline=track3-adapt\n[adaptation]\nkmeans=true joint=ocl cohort=pseudo\n"
                                         "[paths]\nembeddings=sys0.emb\n"),
                                  out, true);
  names.clear();
  for (const auto& s : joint) names.push_back(s.name);
  CHECK(names == std::vector<std::string>{"stats", "adapt", "kmeans", "joint", "stats", "adapt", "kmeans", "score",
                                          "asnorm", "calibrate", "metrics"});
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("track1 artifacts, manifest and fusion direction") {
  const auto out = testing::scratch_dir("pipeline-t1");
  const auto plan = run_pipeline(config(), out);
  const auto files = tree(out);
  for (const auto& s : plan)
    for (const auto& o : s.outputs) CHECK_MESSAGE(files.count(o), o);
  CHECK(files.count("manifest.txt"));
  CHECK(files.count("config.txt"));

  // Every artifact and input is listed with its hash.
  std::istringstream m(files.at("manifest.txt"));
  std::string kind, name, path, hash;
  int artifacts = 0, inputs_seen = 0;
  while (m >> kind) {
    if (kind == "artifact") {
      m >> name >> hash;
      CHECK(hash == file_hash(out / name));
      ++artifacts;
    } else if (kind == "input") {
      m >> name >> path >> hash;
      CHECK(hash == file_hash(path));
      ++inputs_seen;
    } else {
      m >> name;
    }
  }
  CHECK(artifacts + 2 == static_cast<int>(files.size()));
  CHECK(inputs_seen == 7);

  const auto e = eers(out);
  REQUIRE(e.size() == 4);
  CHECK(e.at("fused") <= std::min({e.at("sys0"), e.at("sys1"), e.at("sys2")}));
}

TEST_CASE("artifact tree is reproducible and independent of jobs") {
  const auto a = testing::scratch_dir("pipeline-jobs1");
  const auto b = testing::scratch_dir("pipeline-jobs4");
  const std::string joint = "pipeline=track3-adapt\n[adaptation]\nkmeans=true joint=tcl cohort=pseudo\n[dlglc]\n"
                            "enabled=true\n[train]\nepochs=4\n[paths]\nembeddings=sys0.emb\n";
  auto c1 = config(joint);
  auto c4 = config("jobs=4\n" + joint);
  REQUIRE(c4.jobs == 4);
  run_pipeline(c1, a);
  run_pipeline(c4, b);
  CHECK(tree(a) == tree(b));
  CHECK(tree(a).count("joint.ckpt"));
}

TEST_CASE("track3 with adaptation disabled equals track1") {
  const auto a = testing::scratch_dir("pipeline-off1");
  const auto b = testing::scratch_dir("pipeline-off3");
  run_pipeline(config(), a);
  run_pipeline(config("pipeline=track3-adapt\n[adaptation]\nenabled=false\n"), b);
  auto ta = tree(a), tb = tree(b);
  for (const char* f : {"config.txt", "manifest.txt"}) {
    ta.erase(f);
    tb.erase(f);
  }
  CHECK(ta == tb);
}

TEST_CASE("statistic adaptation helps the synthetic target domain") {
  const auto a = testing::scratch_dir("pipeline-raw");
  const auto b = testing::scratch_dir("pipeline-sa");
  const std::string plain = "[scoring]\ncalibration=none\n[paths]\ncohort=\nembeddings=sys0.emb\n";
  run_pipeline(config(plain), a);
  run_pipeline(config("pipeline=track3-adapt\n" + plain), b);
  CHECK(eers(b).at("sys0") < eers(a).at("sys0"));
}

TEST_CASE("failures name the stage and keep their class") {
  const auto out = testing::scratch_dir("pipeline-fail");
  try {
    run_pipeline(config("[scoring]\ncohort-top-n=600\n"), out);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("stage asnorm") != std::string::npos);
  }
  try {
    run_pipeline(config("[paths]\ntrials=missing.txt\n"), out);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("missing input [paths] trials") != std::string::npos);
  }
  CHECK_THROWS_AS(run_pipeline(config("pipeline=track3-adapt\n[adaptation]\nkmeans=true joint=apl\n"), out),
                  ConfigError);  // joint training needs a single system
}

TEST_CASE("stagewise CLI calls reproduce the track1 run") {
  const auto run = testing::scratch_dir("pipeline-e2e");
  const auto w = testing::scratch_dir("pipeline-stagewise");
  run_pipeline(config(), run);
  const std::string in = inputs().string() + "/";
  const std::string o = w.string() + "/";
  std::string fused, fused_dev;
  for (int i = 0; i < 3; ++i) {
    const std::string s = "sys" + std::to_string(i);
    const std::string emb = " --embeddings " + in + s + ".emb";
    REQUIRE(spkv_cli("score cosine" + emb + " --trials " + in + "trials.txt --out " + o + "score.eval") == 0);
    REQUIRE(spkv_cli("score cosine" + emb + " --trials " + in + "dev-trials.txt --out " + o + "score.dev") == 0);
    REQUIRE(spkv_cli("adapt cohort" + emb + " --utt2spk " + in + "cohort.utt2spk --out " + o + "cohort.emb") == 0);
    for (const char* part : {"eval", "dev"})
      REQUIRE(spkv_cli("score asnorm" + emb + " --cohort " + o + "cohort.emb --top-n 20 --jobs 2 --scores " + o +
                       "score." + part + " --out " + o + "asnorm." + part) == 0);
    REQUIRE(spkv_cli("score calibrate --train " + o + "asnorm.dev --train-trials " + in + "dev-trials.txt --manifest " +
                     in + "manifest.txt --scores " + o + "asnorm.eval --out " + o + s + ".cal --model-out " + o +
                     "model") == 0);
    REQUIRE(spkv_cli("score calibrate --model " + o + "model --manifest " + in + "manifest.txt --scores " + o +
                     "asnorm.dev --out " + o + s + ".cal.dev") == 0);
    const auto same = [&](const std::string& mine, const std::string& theirs) {
      CHECK_MESSAGE(io::read_text_file(w / mine) == io::read_text_file(run / theirs), theirs);
    };
    same("score.eval", "score." + s + ".scores");
    same("score.dev", "score." + s + ".dev.scores");
    same("cohort.emb", "asnorm." + s + ".cohort.emb");
    same("asnorm.eval", "asnorm." + s + ".scores");
    same("asnorm.dev", "asnorm." + s + ".dev.scores");
    same("model", "calibrate." + s + ".model");
    same(s + ".cal", "calibrate." + s + ".scores");
    same(s + ".cal.dev", "calibrate." + s + ".dev.scores");
    fused += " " + o + s + ".cal";
    fused_dev += " " + o + s + ".cal.dev";
  }
  REQUIRE(spkv_cli("score fuse --scores" + fused + " --learn" + fused_dev + " --learn-trials " + in +
                   "dev-trials.txt --weights-out " + o + "weights --out " + o + "fused") == 0);
  REQUIRE(spkv_cli("score metrics --scores " + o + "fused --trials " + in + "trials.txt --out " + o + "metrics") == 0);
  CHECK(io::read_text_file(w / "weights") == io::read_text_file(run / "fuse.weights"));
  CHECK(io::read_text_file(w / "fused") == io::read_text_file(run / "fuse.scores"));
  std::string expected;
  std::istringstream kv(io::read_text_file(run / "metrics.kv"));
  for (std::string line; std::getline(kv, line);)
    if (line.rfind("fused.", 0) == 0) expected += line.substr(6) + '\n';
  CHECK(io::read_text_file(w / "metrics") == expected);
}

TEST_CASE("stagewise CLI calls reproduce the track3 joint run") {
  const auto run = testing::scratch_dir("pipeline-j-e2e");
  const auto w = testing::scratch_dir("pipeline-j-stagewise");
  const std::string extra = "pipeline=track3-adapt\n[adaptation]\nkmeans=true joint=ocl cohort=pseudo\n[dlglc]\n"
                            "enabled=true\n[train]\nepochs=3\n[paths]\nembeddings=sys0.emb\ncohort=\n";
  run_pipeline(config(extra), run);
  const fs::path cfg_file = inputs() / "joint-test.ini";
  io::write_text_file(cfg_file, io::read_text_file(inputs() / "config.ini") + "\n[global]\n" + extra);

  const std::string in = inputs().string() + "/";
  const std::string o = w.string() + "/";
  REQUIRE(spkv_cli("adapt stats --embeddings " + in + "sys0.emb --utts " + in + "target.list --out " + o + "stats") == 0);
  REQUIRE(spkv_cli("adapt apply --embeddings " + in + "sys0.emb --stats " + o + "stats --out " + o + "adapted") == 0);
  REQUIRE(spkv_cli("adapt kmeans --embeddings " + o + "adapted --utts " + in + "target.list --k 40 --seed 0 --out " +
                   o + "labels") == 0);
  REQUIRE(spkv_cli("train adapt --config " + cfg_file.string() + " --labels " + o + "labels --out " + o +
                   "joint.ckpt --log " + o + "joint.log") == 0);
  REQUIRE(spkv_cli("train embed --config " + cfg_file.string() + " --checkpoint " + o + "joint.ckpt --out " + o +
                   "joint.emb") == 0);
  for (const auto& [mine, theirs] : std::vector<std::pair<std::string, std::string>>{{"stats", "stats.sys0.txt"},
                                                                                     {"adapted", "adapt.sys0.emb"},
                                                                                     {"labels", "kmeans.sys0.labels"},
                                                                                     {"joint.ckpt", "joint.ckpt"},
                                                                                     {"joint.log", "joint.log"},
                                                                                     {"joint.emb", "joint.emb"}})
    CHECK_MESSAGE(io::read_text_file(w / mine) == io::read_text_file(run / theirs), theirs);
}

TEST_CASE("CLI exit codes") {
  const auto w = testing::scratch_dir("pipeline-exit");
  const std::string o = w.string() + "/";
  io::write_text_file(w / "bad.ini", "[scoring]\ncohort-top-n=0\n");
  CHECK(spkv_cli("config check --config " + o + "bad.ini") == 2);
  CHECK(spkv_cli("score cosine --embeddings " + o + "none.emb --trials " + o + "none.txt --out " + o + "x") == 3);
  CHECK(spkv_cli("score nosuch") == 2);
  CHECK(spkv_cli("config dump-defaults") == 0);

  // A cohort of identical vectors has no spread: numerical failure.
  io::write_text_file(w / "emb.txt", "a 1 0\nb 0 1\n");
  io::write_text_file(w / "cohort.txt", "c1 1 1\nc2 1 1\n");
  io::write_text_file(w / "trials.txt", "a b target\n");
  REQUIRE(spkv_cli("emb pack --in " + o + "emb.txt --out " + o + "emb") == 0);
  REQUIRE(spkv_cli("emb pack --in " + o + "cohort.txt --out " + o + "cohort") == 0);
  REQUIRE(spkv_cli("score cosine --embeddings " + o + "emb --trials " + o + "trials.txt --out " + o + "s") == 0);
  CHECK(spkv_cli("score asnorm --scores " + o + "s --embeddings " + o + "emb --cohort " + o + "cohort --top-n 2 --out " +
                 o + "n") == 4);
  CHECK(spkv_cli("trials validate --trials " + o + "trials.txt --embeddings " + o + "emb") == 0);
  io::write_text_file(w / "orphan.txt", "a z\n");
  CHECK(spkv_cli("trials validate --trials " + o + "orphan.txt --embeddings " + o + "emb") == 3);
}

TEST_CASE("config path from the environment") {
  const auto w = testing::scratch_dir("pipeline-env");
  io::write_text_file(w / "bad.ini", "[loss]\nscale=-1\n");
  const std::string cmd = std::string("SPKV_CONFIG=") + (w / "bad.ini").string() + " " + SPKV_CLI +
                          " config check >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("emb pack and unpack round trip") {
  const auto w = testing::scratch_dir("pipeline-emb");
  const std::string o = w.string() + "/";
  io::write_text_file(w / "in.txt", "u1 0.5 -1.25 3\nu2 1 2 0.125\n");
  REQUIRE(spkv_cli("emb pack --in " + o + "in.txt --out " + o + "e") == 0);
  REQUIRE(spkv_cli("emb unpack --in " + o + "e --out " + o + "out.txt") == 0);
  CHECK(io::read_text_file(w / "out.txt") == "u1 0.5 -1.25 3\nu2 1 2 0.125\n");
  io::write_text_file(w / "ragged.txt", "u1 0.5 1\nu2 1\n");
  CHECK(spkv_cli("emb pack --in " + o + "ragged.txt --out " + o + "r") == 3);
}

TEST_CASE("feat augment writes the offline plan and features") {
  const auto w = testing::scratch_dir("pipeline-feat");
  const std::string o = w.string() + "/";
  io::write_text_file(w / "aug.cfg", "num-mel-bins=24\n");
  io::write_text_file(w / "m.txt", "u1 spkA source 0.4\nu2 spkB source 0.3\n");
  REQUIRE(spkv_cli("feat augment --config " + o + "aug.cfg --manifest " + o + "m.txt --out " + o + "out") == 0);
  const auto plan = io::read_manifest(w / "out" / "plan.manifest");
  CHECK(plan.size() == 30);
  CHECK(plan.num_speakers() == 6);
  const auto feats = io::read_matrix_archive(w / "out" / "feats.mat");
  REQUIRE(feats.size() == 30);
  for (const auto& [name, m] : feats) {
    CHECK(m.cols() == 24);
    CHECK(m.allFinite());
  }
}

}  // TEST_SUITE
