#include "nzk/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace nzk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nzk_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

cli::Options options(const fs::path& dir, const std::string& config_text, const std::string& out = "out") {
  const fs::path cfg = dir / "run.conf";
  std::ofstream(cfg) << config_text;
  cli::Options opt;
  opt.config_path = cfg.string();
  opt.out_dir = dir / out;
  return opt;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::map<std::string, std::string> read_manifest(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

int run_binary(const std::string& args) {
  const int rc = std::system((std::string(NZK_BINARY) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const char* kTrain = R"(seed = 3
data.d = 2
data.n = 8
model.kind = linear
train.mode = fo, zo_kernel
train.steps = 50
train.record_every = 10
)";

}  // namespace

TEST(Config, Grammar) {
  const Config c = Config::parse("# comment\n a.b = 1 # trailing\n\nlist = x, y ,z\nflag = yes\nbig = 1e4\n");
  EXPECT_EQ(c.get_double("a.b", 0.0), 1.0);
  EXPECT_EQ(c.get_list("list", ""), (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_u64("big", 0), 10000u);
  EXPECT_EQ(c.get_double("absent", 2.5), 2.5);
  EXPECT_EQ(c.resolved().at("absent"), "2.5");
  EXPECT_TRUE(c.unused().empty());
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      Config::parse(text);
    } catch (const ParseError& e) {
      return e.position();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("a = 1\nno equals sign\n"), 2u);
  EXPECT_EQ(line_of("a = 1\n\nb c = 2\n"), 3u);
  EXPECT_EQ(line_of("a = 1\na = 2\n"), 2u);
  EXPECT_EQ(line_of(" = 2\n"), 1u);
  const Config c = Config::parse("n = -3\nx = abc\nf = maybe\n");
  EXPECT_THROW(c.get_u64("n", 0), ConfigError);
  EXPECT_THROW(c.get_double("x", 0), ConfigError);
  EXPECT_THROW(c.get_bool("f", false), ConfigError);
  EXPECT_THROW(c.require_string("missing"), ConfigError);
}

TEST(Cli, UnknownKeyIsRejected) {
  const fs::path dir = scratch("unknown");
  EXPECT_THROW(cli::dispatch("train", options(dir, "train.stpes = 10\n")), ConfigError);
  EXPECT_FALSE(fs::exists(dir / "out" / "manifest"));
}

TEST(Cli, TrainWithZeroStepsWritesOneRow) {
  const fs::path dir = scratch("t0");
  const RunManifest m = cli::dispatch("train", options(dir, "train.steps = 0\n"));
  EXPECT_TRUE(m.ok());
  const std::string csv = slurp(dir / "out" / "trajectory_fo.csv");
  EXPECT_EQ(count_lines(csv), 2u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,f_0,f_1,f_2,f_3,f_4,f_5,f_6,f_7");
}

TEST(Cli, ManifestListsEveryArtifact) {
  const fs::path dir = scratch("listing");
  const cli::Options opt = options(dir, kTrain);
  const RunManifest m = cli::dispatch("train", opt);
  std::set<std::string> on_disk;
  for (const auto& e : fs::directory_iterator(opt.out_dir)) on_disk.insert(e.path().filename().string());
  on_disk.erase("manifest");
  EXPECT_EQ(on_disk, std::set<std::string>(m.artifacts.begin(), m.artifacts.end()));
  EXPECT_EQ(on_disk, (std::set<std::string>{"trajectory_fo.csv", "trajectory_zo_kernel.csv"}));

  const auto kv = read_manifest(opt.out_dir / "manifest");
  EXPECT_EQ(kv.at("command"), "train");
  EXPECT_EQ(kv.at("seed"), "3");
  EXPECT_EQ(kv.at("status"), "ok");
  EXPECT_EQ(kv.at("config.train.steps"), "50");
  EXPECT_EQ(kv.at("config.train.epsilon"), "0.001");  // defaults are recorded too
  EXPECT_EQ(kv.at("artifact.0"), "trajectory_fo.csv");
}

TEST(Cli, RunsAreByteReproducible) {
  const fs::path dir = scratch("repro");
  cli::dispatch("train", options(dir, kTrain, "a"));
  cli::dispatch("train", options(dir, kTrain, "b"));
  for (const char* f : {"trajectory_fo.csv", "trajectory_zo_kernel.csv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;

  const fs::path kdir = scratch("repro_kernel");
  const std::string kcfg = "kernel.m = 600\nkernel.sample_mode = shared\n";
  cli::Options one = options(kdir, kcfg, "a");
  cli::Options four = options(kdir, kcfg, "b");
  four.threads = 4;
  cli::dispatch("kernel", one);
  cli::dispatch("kernel", four);
  for (const char* f : {"kernel_mc.csv", "kernel_se.csv", "kernel_closed.csv", "ntk.csv"})
    EXPECT_EQ(slurp(kdir / "a" / f), slurp(kdir / "b" / f)) << f;
}

TEST(Cli, SeedOverrideChangesValuesNotSchema) {
  const fs::path dir = scratch("seeds");
  cli::Options a = options(dir, kTrain, "a");
  cli::Options b = options(dir, kTrain, "b");
  b.seed = 99;
  cli::dispatch("train", a);
  const RunManifest mb = cli::dispatch("train", b);
  EXPECT_EQ(mb.seed, 99u);
  const std::string ta = slurp(dir / "a" / "trajectory_zo_kernel.csv");
  const std::string tb = slurp(dir / "b" / "trajectory_zo_kernel.csv");
  EXPECT_NE(ta, tb);
  EXPECT_EQ(ta.substr(0, ta.find('\n')), tb.substr(0, tb.find('\n')));
  EXPECT_EQ(count_lines(ta), count_lines(tb));
}

TEST(Cli, KernelVerdicts) {
  const fs::path dir = scratch("kernel");
  const RunManifest m = cli::dispatch("kernel", options(dir, "data.n = 8\nkernel.m = 10000\n"));
  ASSERT_EQ(m.verdicts.size(), 1u);
  EXPECT_EQ(m.verdicts[0].status, Status::pass);
  EXPECT_EQ(slurp(dir / "out" / "kernel_closed.csv"), slurp(dir / "out" / "ntk.csv"));

  const fs::path d50 = scratch("kernel50");
  const RunManifest s = cli::dispatch("kernel", options(d50, "data.d = 50\nkernel.sample_mode = shared\nkernel.m = 2000\n"));
  EXPECT_EQ(s.extra.at("kernel_scale"), "52");
  EXPECT_EQ(read_manifest(d50 / "out" / "manifest").at("info.kernel_scale"), "52");

  const fs::path tiny = scratch("kernel_m2");
  const RunManifest t = cli::dispatch("kernel", options(tiny, "kernel.m = 2\n"));
  EXPECT_EQ(t.verdicts[0].status, Status::inconclusive);
  EXPECT_TRUE(t.ok());
}

TEST(Cli, DynamicsFoAndFixedPoint) {
  const fs::path dir = scratch("dyn");
  const RunManifest m = cli::dispatch("dynamics", options(dir, "train.steps = 1000\n"));
  ASSERT_EQ(m.verdicts.size(), 1u);
  EXPECT_EQ(m.verdicts[0].status, Status::pass);
  EXPECT_LE(m.verdicts[0].measured, 1e-10);

  // Teacher equal to the initial weights: f0 = f*, nothing moves.
  const Vec w = standard_normal(2, 0);
  const fs::path fp = scratch("dyn_fixed");
  const std::string cfg = "data.teacher = " + format_double(w[0]) + ", " + format_double(w[1]) +
                          "\ndata.noise = 0\ntrain.steps = 100\n";
  const RunManifest f = cli::dispatch("dynamics", options(fp, cfg));
  EXPECT_EQ(f.verdicts[0].measured, 0.0);
  std::istringstream in(slurp(fp / "out" / "closed_form_fvals.csv"));
  std::string header, first, line;
  std::getline(in, header);
  std::getline(in, first);
  while (std::getline(in, line)) EXPECT_EQ(line.substr(line.find(',')), first.substr(first.find(',')));
}

TEST(Cli, DynamicsEnsembleTooSmallIsInconclusive) {
  const fs::path dir = scratch("dyn_small");
  const RunManifest m = cli::dispatch(
      "dynamics", options(dir, "train.mode = zo_kernel\ntrain.steps = 200\ndynamics.seeds = 5\n"));
  EXPECT_EQ(m.verdicts[0].status, Status::inconclusive);
}

TEST(Cli, CheckPasses) {
  const fs::path dir = scratch("check");
  cli::Options opt;
  opt.out_dir = dir / "out";
  const RunManifest m = cli::dispatch("check", opt);
  EXPECT_TRUE(m.ok());
  for (const auto& v : m.verdicts) EXPECT_EQ(v.status, Status::pass) << v.name;
  EXPECT_GE(m.verdicts.size(), 8u);
}

TEST(Cli, SweepWritesSummary) {
  const fs::path dir = scratch("sweep");
  const RunManifest m = cli::dispatch(
      "sweep", options(dir, "sweep.axis = sigma\nsweep.seeds = 4\nsweep.checkpoint = 100\nsweep.baseline = false\n"));
  const std::string summary = slurp(dir / "out" / "summary.csv");
  EXPECT_EQ(count_lines(summary), 4u);
  EXPECT_EQ(m.artifacts.back(), "summary.csv");
  EXPECT_THROW(cli::dispatch("sweep", options(dir, "sweep.axis = width\n", "bad")), ConfigError);
}

TEST(Cli, ExitStatus) {
  const fs::path dir = scratch("exit");
  EXPECT_EQ(run_binary("check --out " + (dir / "ok").string()), 0);
  std::ofstream(dir / "bad.conf") << "train.steps = ten\n";
  EXPECT_EQ(run_binary("train --config " + (dir / "bad.conf").string() + " --out " + (dir / "bad").string()), 2);
  std::ofstream(dir / "diverge.conf") << "train.eta = 100\ntrain.steps = 500\n";
  EXPECT_EQ(run_binary("train --config " + (dir / "diverge.conf").string() + " --out " + (dir / "div").string()), 2);
  // A deliberately failing statistical verdict: a badly mismatched Laplace scale.
  std::ofstream(dir / "fail.conf") << "sweep.axis = distribution\nsweep.laplace_b = 1.5\nsweep.seeds = 40\n"
                                      "sweep.checkpoint = 400\n";
  EXPECT_EQ(run_binary("sweep --config " + (dir / "fail.conf").string() + " --out " + (dir / "fail").string()), 1);
}

TEST(Cli, BundledConfigsParse) {
  for (const auto& e : fs::directory_iterator(NZK_CONFIG_DIR)) {
    EXPECT_NO_THROW(Config::load(e.path().string())) << e.path();
    std::istringstream in(slurp(e.path()));
    std::string line;
    while (std::getline(in, line)) {
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = detail::trim(line);
      if (line.empty()) continue;
      const std::string key = detail::trim(line.substr(0, line.find('=')));
      EXPECT_TRUE(cli::known_keys().count(key)) << e.path() << ": " << key;
    }
  }
}
