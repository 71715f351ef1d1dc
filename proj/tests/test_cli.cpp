#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "msvar/image_io.hpp"
#include "msvar/metrics.hpp"

using namespace msvar;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const char* root = std::getenv("MSVAR_TEST_TMP");
    const fs::path base = root ? fs::path(root) : fs::temp_directory_path() / "msvar_cli_tests";
    const fs::path dir = base / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run invoke(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<double> trace_losses(const fs::path& csv) {
    std::istringstream in(slurp(csv));
    std::string line;
    std::getline(in, line);
    std::vector<double> losses;
    while (std::getline(in, line)) {
        const auto a = line.find(',');
        losses.push_back(std::stod(line.substr(a + 1)));
    }
    return losses;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes the phantom contract") {
    const fs::path dir = scratch("synth");
    const Run r = invoke({"synth", "two-phase", "64", "0.05", "7", dir.string()});
    CHECK(r.code == cli::kExitOk);
    CHECK(fs::exists(dir / "image.pgm"));
    CHECK(fs::exists(dir / "gt.pgm"));
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK_FALSE(fs::exists(dir / "bias_true.bin"));
    CHECK(r.out.find("image.pgm") != std::string::npos);
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["kind"] == "two-phase");
    CHECK(manifest["seed"] == 7);

    const fs::path again = scratch("synth_again");
    CHECK(invoke({"synth", "two-phase", "64", "0.05", "7", again.string()}).code == 0);
    CHECK(slurp(dir / "image.pgm") == slurp(again / "image.pgm"));

    const fs::path ramp = scratch("synth_ramp");
    CHECK(invoke({"synth", "ramp-bias", "32", "0.02", "1", ramp.string()}).code == 0);
    CHECK(fs::file_size(ramp / "bias_true.bin") == 32 * 32 * 8);
    const ScalarField b = read_raw_f64(ramp / "bias_true.bin", 32, 32);
    CHECK(b(0, 0) == doctest::Approx(0.7));
}

TEST_CASE("synth errors") {
    const fs::path dir = scratch("synth_err");
    CHECK(invoke({"synth", "hexagon", "64", "0.05", "7", dir.string()}).code == cli::kExitInvalid);
    CHECK(invoke({"synth", "two-phase", "8", "0.05", "7", dir.string()}).code == cli::kExitInvalid);
    fs::path blocker = dir / "file";
    std::ofstream(blocker) << "x";
    CHECK(invoke({"synth", "two-phase", "64", "0.05", "7", (blocker / "sub").string()}).code == cli::kExitInvalid);
    CHECK(invoke({"synth", "two-phase", "64"}).code == cli::kExitUsage);
    CHECK(invoke({"synth", "two-phase", "sixty", "0.05", "7", dir.string()}).code == cli::kExitUsage);
}

TEST_CASE("segment with ms, eval and reruns") {
    const fs::path data = scratch("seg_data");
    REQUIRE(invoke({"synth", "two-phase", "64", "0.05", "7", data.string()}).code == 0);
    const fs::path out = scratch("seg_ms");
    const Run r = invoke({"segment", "--solver", "ms", "--classes", "2", "--lambda", "1e-3",
                         (data / "image.pgm").string(), out.string()});
    CHECK(r.code == cli::kExitOk);
    for (const char* f : {"mask.pgm", "trace.csv", "run.json"}) CHECK(fs::exists(out / f));

    const auto losses = trace_losses(out / "trace.csv");
    REQUIRE(losses.size() > 1);
    for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1]);
    CHECK(slurp(out / "trace.csv").rfind("iter,loss,data_term,tv_term\n", 0) == 0);

    const auto run = nlohmann::json::parse(slurp(out / "run.json"));
    CHECK(run["solver"] == "ms");
    CHECK(run["lambda"] == 1e-3);
    CHECK(run["eta"] == 0.5);
    CHECK(run["max_iters"] == 500);
    CHECK(run["seed"] == 0);
    CHECK(run["init"] == "random");
    CHECK(run["result"]["converged"] == true);
    CHECK(run["result"]["centroids"].size() == 2);

    const Run e = invoke({"eval", "--positive-class", "1", (out / "mask.pgm").string(), (data / "gt.pgm").string()});
    CHECK(e.code == 0);
    std::istringstream rows(e.out);
    std::string header;
    std::string row;
    std::getline(rows, header);
    std::getline(rows, row);
    CHECK(header == "pred,gt,iou,dice,precision,recall,rc,pri,vi");
    const auto iou = overlap_metrics(read_labels(out / "mask.pgm"), read_labels(data / "gt.pgm"), 1).iou;
    CHECK(iou >= 0.99);

    SUBCASE("identical flags reproduce byte-identical outputs") {
        const fs::path again = scratch("seg_ms_again");
        CHECK(invoke({"segment", "--solver", "ms", "--classes", "2", "--lambda", "1e-3", (data / "image.pgm").string(),
                     again.string()})
                  .code == 0);
        CHECK(slurp(out / "mask.pgm") == slurp(again / "mask.pgm"));
        CHECK(slurp(out / "trace.csv") == slurp(again / "trace.csv"));
    }
    SUBCASE("re-running from run.json reproduces the outputs") {
        const fs::path again = scratch("seg_ms_config");
        CHECK(invoke({"segment", "--config", (out / "run.json").string(), again.string()}).code == 0);
        CHECK(slurp(out / "mask.pgm") == slurp(again / "mask.pgm"));
        CHECK(slurp(out / "trace.csv") == slurp(again / "trace.csv"));
    }
    SUBCASE("explicit flags override the config") {
        const fs::path again = scratch("seg_ms_override");
        CHECK(invoke({"segment", "--config", (out / "run.json").string(), "--seed", "3", again.string()}).code == 0);
        CHECK(nlohmann::json::parse(slurp(again / "run.json"))["seed"] == 3);
    }
    SUBCASE("eval of a mask against itself") {
        const Run self = invoke({"eval", "--positive-class", "1", (out / "mask.pgm").string(), (out / "mask.pgm").string()});
        std::istringstream lines(self.out);
        std::getline(lines, header);
        std::getline(lines, row);
        const std::string tail = row.substr(row.find(',', row.find(',') + 1) + 1);
        CHECK(tail == "1,1,1,1,1,1,0");
    }
    SUBCASE("eval without a positive class leaves overlap columns empty") {
        const Run plain = invoke({"eval", (out / "mask.pgm").string(), (data / "gt.pgm").string()});
        CHECK(plain.code == 0);
        CHECK(plain.out.find(",,,,,") != std::string::npos);
    }
}

TEST_CASE("segment with ms-bias emits the bias field") {
    const fs::path data = scratch("bias_data");
    REQUIRE(invoke({"synth", "ramp-bias", "64", "0.02", "7", data.string()}).code == 0);
    const fs::path out = scratch("bias_out");
    const Run r = invoke({"segment", "--solver", "ms-bias", "--gamma", "0.1", (data / "image.pgm").string(), out.string()});
    CHECK(r.code == cli::kExitOk);
    CHECK(fs::exists(out / "bias.pgm"));
    CHECK(fs::file_size(out / "bias.bin") == 64 * 64 * 8);
    CHECK(slurp(out / "trace.csv").rfind("iter,loss,data_term,tv_term,bias_tv_term\n", 0) == 0);
}

TEST_CASE("segment with the level-set solver") {
    const fs::path data = scratch("ls_data");
    REQUIRE(invoke({"synth", "four-phase", "64", "0.05", "7", data.string()}).code == 0);
    const fs::path out = scratch("ls_out");
    const Run r = invoke({"segment", "--solver", "levelset", "--phases", "2", (data / "image.pgm").string(), out.string()});
    CHECK(r.code == cli::kExitOk);
    const LabelMap mask = read_labels(out / "mask.pgm");
    std::vector<int> seen(256, 0);
    for (auto v : mask.labels()) seen[v] = 1;
    CHECK(seen[0] + seen[1] + seen[2] + seen[3] == 4);
    CHECK(mask.num_classes() == 4);
    const auto run = nlohmann::json::parse(slurp(out / "run.json"));
    CHECK(run["classes"] == 4);
    CHECK(run["lambda"] == 1e-2);
}

TEST_CASE("segment exit codes") {
    const fs::path data = scratch("codes_data");
    REQUIRE(invoke({"synth", "two-phase", "32", "0.05", "1", data.string()}).code == 0);
    const std::string image = (data / "image.pgm").string();

    SUBCASE("iteration cap is reported as non-convergence with outputs written") {
        const fs::path out = scratch("codes_cap");
        const Run r = invoke({"segment", "--max-iters", "3", image, out.string()});
        CHECK(r.code == cli::kExitNotConverged);
        CHECK(fs::exists(out / "mask.pgm"));
        CHECK(nlohmann::json::parse(slurp(out / "run.json"))["result"]["converged"] == false);
        const fs::path ls = scratch("codes_cap_ls");
        CHECK(invoke({"segment", "--solver", "levelset", "--max-iters", "2", image, ls.string()}).code ==
              cli::kExitNotConverged);
        CHECK(fs::exists(ls / "trace.csv"));
    }
    SUBCASE("usage errors") {
        CHECK(invoke({}).code == cli::kExitUsage);
        CHECK(invoke({"segment", "--solver"}).code == cli::kExitUsage);
        CHECK(invoke({"segment", "--bogus", image}).code == cli::kExitUsage);
        CHECK(invoke({"segment", "--lambda", "abc", image, "x"}).code == cli::kExitUsage);
        CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
        CHECK(invoke({"segment", image}).code == cli::kExitUsage);
        CHECK(invoke({"--help"}).code == cli::kExitOk);
    }
    SUBCASE("validation and I/O errors") {
        const fs::path out = scratch("codes_invalid");
        CHECK(invoke({"segment", "--solver", "graphcut", image, out.string()}).code == cli::kExitInvalid);
        CHECK(invoke({"segment", "--classes", "1", image, out.string()}).code == cli::kExitInvalid);
        CHECK(invoke({"segment", "--lambda", "-1", image, out.string()}).code == cli::kExitInvalid);
        CHECK(invoke({"segment", "--solver", "levelset", "--phases", "3", image, out.string()}).code ==
              cli::kExitInvalid);
        CHECK(invoke({"segment", "--solver", "levelset", "--dt", "100", image, out.string()}).code ==
              cli::kExitInvalid);
        CHECK(invoke({"segment", "--init", "zeros", image, out.string()}).code == cli::kExitInvalid);
        CHECK(invoke({"segment", (data / "missing.pgm").string(), out.string()}).code == cli::kExitInvalid);
        CHECK(invoke({"segment", "--config", (data / "missing.json").string(), out.string()}).code == cli::kExitInvalid);
        std::ofstream(data / "bad.json") << "{ not json";
        CHECK(invoke({"segment", "--config", (data / "bad.json").string(), out.string()}).code == cli::kExitInvalid);
        CHECK(invoke({"eval", image, (data / "missing.pgm").string()}).code == cli::kExitInvalid);
    }
    SUBCASE("eval rejects mismatched maps") {
        const fs::path other = scratch("codes_other");
        REQUIRE(invoke({"synth", "two-phase", "16", "0.0", "1", other.string()}).code == 0);
        const Run r = invoke({"eval", (data / "gt.pgm").string(), (other / "gt.pgm").string()});
        CHECK(r.code == cli::kExitInvalid);
        CHECK_FALSE(r.err.empty());
    }
    SUBCASE("thread count from the environment") {
        const fs::path out = scratch("codes_threads");
        ::setenv("MSVAR_THREADS", "0", 1);
        CHECK(invoke({"segment", image, out.string()}).code == cli::kExitInvalid);
        ::setenv("MSVAR_THREADS", "2", 1);
        CHECK(invoke({"segment", image, out.string()}).code == cli::kExitOk);
        ::unsetenv("MSVAR_THREADS");
    }
}

TEST_CASE("semi-supervised segmentation with labels") {
    const fs::path data = scratch("sup_data");
    REQUIRE(invoke({"synth", "two-phase", "32", "0.1", "2", data.string()}).code == 0);
    const fs::path out = scratch("sup_out");
    CHECK(invoke({"segment", "--labels", (data / "gt.pgm").string(), "--beta", "1e-6", (data / "image.pgm").string(),
                 out.string()})
              .code == cli::kExitOk);
    const auto o = overlap_metrics(read_labels(out / "mask.pgm"), read_labels(data / "gt.pgm"), 1);
    CHECK(o.iou >= 0.99);
    CHECK(invoke({"segment", "--solver", "levelset", "--labels", (data / "gt.pgm").string(),
                 (data / "image.pgm").string(), out.string()})
              .code == cli::kExitInvalid);
}

}  // TEST_SUITE
