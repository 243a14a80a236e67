#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/fixtures.hpp"
#include "cli.hpp"
#include "stv/io.hpp"

using namespace stv;
namespace fs = std::filesystem;
namespace fx = stv::fixtures;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("stv_cli_test_" + std::to_string(::getpid()));
  Scratch() {
    fs::create_directories(dir);
    std::ofstream(dir / "fast.cfg") << "ddim_steps = 3\n";
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"paint"}).code == cli::kUsage);
  CHECK(run({"generate", "--frames", "16"}).code == cli::kUsage);
  CHECK(run({"generate", "--frames", "20", "--out", "x.stv"}).code == cli::kUsage);
  CHECK(run({"generate", "--frames", "0", "--out", "x.stv"}).code == cli::kUsage);
  CHECK(run({"enhance", "--in", "a", "--out", "b", "--mode", "median"}).code == cli::kUsage);
  CHECK(run({"ablate-blending", "--frames", "10"}).code == cli::kUsage);
  CHECK(run({"ablate-blending", "--seeds", "0"}).code == cli::kUsage);
  const Result h = run({"--help"});
  CHECK(h.code == cli::kOk);
  CHECK(h.out.find("generate") != std::string::npos);
}

TEST_CASE("generate is deterministic") {
  const Scratch s;
  const Result a = run({"generate", "--prompt", "a boat at sea", "--frames", "32", "--seed", "3", "--config", s("fast.cfg"),
                        "--out", s("a.stv")});
  REQUIRE(a.code == cli::kOk);
  CHECK(a.out.find("chunks: 2\n") == 0);
  const Result b = run({"generate", "--prompt", "a boat at sea", "--frames", "32", "--seed", "3", "--config", s("fast.cfg"),
                        "--out", s("b.stv")});
  REQUIRE(b.code == cli::kOk);
  CHECK(slurp(s("a.stv")) == slurp(s("b.stv")));
  const Tensor v = read_container(fs::path(s("a.stv")));
  CHECK(v.dims() == Shape{32, 8, 8, 4});
  CHECK(v.all_finite());

  run({"generate", "--prompt", "a boat at sea", "--frames", "32", "--seed", "4", "--config", s("fast.cfg"), "--out", s("c.stv")});
  CHECK(slurp(s("a.stv")) != slurp(s("c.stv")));
}

TEST_CASE("configuration through the environment") {
  const Scratch s;
  std::ofstream(s("bad.cfg")) << "F_cond = 40\n";
  ::setenv("STV_CONFIG", s("bad.cfg").c_str(), 1);
  CHECK(run({"generate", "--frames", "16", "--out", s("x.stv")}).code == cli::kDomain);
  // An explicit flag wins over the environment.
  CHECK(run({"generate", "--frames", "16", "--config", s("fast.cfg"), "--out", s("x.stv")}).code == cli::kOk);
  ::unsetenv("STV_CONFIG");
  std::ofstream(s("typo.cfg")) << "stepz = 3\n";
  CHECK(run({"generate", "--frames", "16", "--config", s("typo.cfg"), "--out", s("x.stv")}).code == cli::kFormat);
}

TEST_CASE("eval") {
  const Scratch s;
  write_container(fs::path(s("cut.stv")), fx::cut_video(24, 32, 32, {12}));
  const Result r = run({"eval", "--in", s("cut.stv"), "--metrics", "scuts"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out == "metric,value\nscuts,1\n");

  const Result all = run({"eval", "--in", s("cut.stv"), "--out", s("m.csv")});
  CHECK(all.code == cli::kOk);
  const std::string csv = slurp(s("m.csv"));
  CHECK(csv.find("metric,value\nmawe,") == 0);
  for (const char* name : {"\nofs,", "\nwarp_error,", "\nscuts,1\n", "\nflow_std,"}) CHECK(csv.find(name) != std::string::npos);

  write_container(fs::path(s("static.stv")), fx::static_video(6, 16, 16));
  const Result st = run({"eval", "--in", s("static.stv"), "--metrics", "mawe"});
  CHECK(st.code == cli::kDomain);
  CHECK(st.err.find("undefined: static video") != std::string::npos);

  CHECK(run({"eval", "--in", s("cut.stv"), "--metrics", "reid"}).code == cli::kUsage);
  CHECK(run({"eval", "--in", s("cut.stv"), "--metrics", "ofs,clip"}).code == cli::kUsage);
  std::ofstream(s("emb.json")) << "[[[1, 0]], [[1, 0]], [[2, 0]]]";
  const Result id = run({"eval", "--in", s("cut.stv"), "--metrics", "reid,scuts", "--embeddings", s("emb.json")});
  CHECK(id.code == cli::kOk);
  CHECK(id.out == "metric,value\nreid,1\nscuts,1\n");
  std::ofstream(s("bad.json")) << "[[1]]";
  CHECK(run({"eval", "--in", s("cut.stv"), "--metrics", "reid", "--embeddings", s("bad.json")}).code == cli::kFormat);

  std::ofstream(s("junk.stv")) << "not a container";
  const Result junk = run({"eval", "--in", s("junk.stv")});
  CHECK(junk.code == cli::kFormat);
  CHECK(junk.err.find("bad magic") != std::string::npos);
  CHECK(run({"eval", "--in", s("missing.stv")}).code == cli::kFormat);
}

TEST_CASE("xtslice") {
  const Scratch s;
  write_container(fs::path(s("v.stv")), fx::pan_video(10, 8, 12, 1.0));
  CHECK(run({"xtslice", "--in", s("v.stv"), "--row", "3", "--out", s("x.pgm")}).code == cli::kOk);
  const GrayImage img = read_pgm(fs::path(s("x.pgm")));
  CHECK(img.width == 10);
  CHECK(img.height == 12);
  CHECK(run({"xtslice", "--in", s("v.stv"), "--row", "8", "--out", s("y.pgm")}).code == cli::kUsage);
  CHECK(!fs::exists(s("y.pgm")));
  write_container(fs::path(s("m.stv")), Tensor({4, 4}, 0.5));
  CHECK(run({"xtslice", "--in", s("m.stv"), "--row", "0", "--out", s("y.pgm")}).code == cli::kFormat);
}

TEST_CASE("enhance") {
  const Scratch s;
  RngStream r(11);
  write_container(fs::path(s("short.stv")), gaussian(r, {24, 4, 4, 2}));
  std::string first;
  for (const char* mode : {"naive", "shared", "randomized"}) {
    const Result e = run({"enhance", "--in", s("short.stv"), "--out", s("e.stv"), "--mode", mode, "--tprime", "200", "--steps",
                          "4", "--seed", "2"});
    REQUIRE(e.code == cli::kOk);
    CHECK(e.out == "chunks: 1\n");
    if (first.empty()) first = slurp(s("e.stv"));
    else CHECK(slurp(s("e.stv")) == first);
  }

  write_container(fs::path(s("long.stv")), gaussian(r, {88, 4, 4, 2}));
  const Result l = run({"enhance", "--in", s("long.stv"), "--out", s("l.stv"), "--tprime", "200", "--steps", "4"});
  CHECK(l.code == cli::kOk);
  CHECK(l.out == "chunks: 5\n");
  CHECK(read_container(fs::path(s("l.stv"))).dims() == Shape{88, 4, 4, 2});

  CHECK(run({"enhance", "--in", s("short.stv"), "--out", s("x.stv"), "--tprime", "1000"}).code == cli::kDomain);
  write_container(fs::path(s("tiny.stv")), gaussian(r, {10, 4, 4, 2}));
  CHECK(run({"enhance", "--in", s("tiny.stv"), "--out", s("x.stv"), "--steps", "4"}).code == cli::kDomain);
}

TEST_CASE("ablate-blending") {
  const Scratch s;
  const Result a = run({"ablate-blending", "--frames", "40", "--seeds", "1", "--config", s("fast.cfg")});
  REQUIRE(a.code == cli::kOk);
  std::istringstream lines(a.out);
  std::vector<std::string> rows;
  for (std::string line; std::getline(lines, line);) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "mode,mean_flow_std");
  CHECK(rows[1].rfind("naive,", 0) == 0);
  CHECK(rows[2].rfind("shared,", 0) == 0);
  CHECK(rows[3].rfind("randomized,", 0) == 0);
}
