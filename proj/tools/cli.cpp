#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "msvar/bias_field.hpp"
#include "msvar/image_io.hpp"
#include "msvar/level_set.hpp"
#include "msvar/metrics.hpp"
#include "msvar/parallel.hpp"
#include "msvar/soft_seg.hpp"
#include "msvar/supervision.hpp"

namespace msvar::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    std::string input;
    std::string output;
    std::string solver = "ms";
    std::size_t classes = 2;
    std::optional<double> lambda;  ///< solver-dependent default
    double gamma = 0.1;
    double beta = 1e-7;
    double eta = 0.5;
    double dt = 0.5;
    std::optional<std::size_t> max_iters;
    double rel_tol = 1e-6;
    std::uint64_t seed = 0;
    std::string init = "random";
    std::size_t phases = 1;
    std::string mode = "frozen";
    std::string labels;  ///< empty: unsupervised
    double eps_h = 1.0;
    double tv_eps = 1e-8;

    void resolve() {
        if (solver != "ms" && solver != "ms-bias" && solver != "levelset") {
            throw ParameterError("unknown solver '" + solver + "'");
        }
        const bool levelset = solver == "levelset";
        if (!lambda) lambda = levelset ? LevelSetParams{}.lambda : MsConfig{}.lambda;
        if (!max_iters) max_iters = levelset ? LevelSetParams{}.max_iters : MsConfig{}.max_iters;
        if (levelset) classes = std::size_t{1} << phases;
        parse_init_kind(init);
        mode = std::string(to_string(parse_gradient_mode(mode)));
        if (!labels.empty() && solver != "ms") throw ParameterError("--labels is only supported by the ms solver");
    }
};

json to_json(const RunConfig& c) {
    return json{{"command", "segment"}, {"input", c.input},    {"output", c.output},     {"solver", c.solver},
                {"classes", c.classes}, {"lambda", *c.lambda}, {"gamma", c.gamma},       {"beta", c.beta},
                {"eta", c.eta},         {"dt", c.dt},          {"max_iters", *c.max_iters}, {"rel_tol", c.rel_tol},
                {"seed", c.seed},       {"init", c.init},      {"phases", c.phases},     {"mode", c.mode},
                {"labels", c.labels},   {"eps_h", c.eps_h},    {"tv_eps", c.tv_eps}};
}

void from_json_file(const fs::path& path, RunConfig& c) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed config " + path.string() + ": " + e.what());
    }
    try {
        if (j.contains("input")) c.input = j.at("input").get<std::string>();
        if (j.contains("output")) c.output = j.at("output").get<std::string>();
        if (j.contains("solver")) c.solver = j.at("solver").get<std::string>();
        if (j.contains("classes")) c.classes = j.at("classes").get<std::size_t>();
        if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
        if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
        if (j.contains("beta")) c.beta = j.at("beta").get<double>();
        if (j.contains("eta")) c.eta = j.at("eta").get<double>();
        if (j.contains("dt")) c.dt = j.at("dt").get<double>();
        if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<std::size_t>();
        if (j.contains("rel_tol")) c.rel_tol = j.at("rel_tol").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("init")) c.init = j.at("init").get<std::string>();
        if (j.contains("phases")) c.phases = j.at("phases").get<std::size_t>();
        if (j.contains("mode")) c.mode = j.at("mode").get<std::string>();
        if (j.contains("labels")) c.labels = j.at("labels").get<std::string>();
        if (j.contains("eps_h")) c.eps_h = j.at("eps_h").get<double>();
        if (j.contains("tv_eps")) c.tv_eps = j.at("tv_eps").get<double>();
    } catch (const json::exception& e) {
        throw ParameterError("bad field in config " + path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    out.close();
    if (!out) throw IoError("write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

json centroids_json(const Centroids& c) {
    json rows = json::array();
    for (std::size_t n = 0; n < c.num_classes(); ++n) {
        rows.push_back(std::vector<double>(c.row(n).begin(), c.row(n).end()));
    }
    return rows;
}

MsConfig ms_config(const RunConfig& c) {
    MsConfig cfg;
    cfg.lambda = *c.lambda;
    cfg.num_classes = c.classes;
    cfg.step_size = c.eta;
    cfg.max_iters = *c.max_iters;
    cfg.rel_tol = c.rel_tol;
    cfg.tv_eps = c.tv_eps;
    cfg.seed = c.seed;
    cfg.mode = parse_gradient_mode(c.mode);
    cfg.validate();
    return cfg;
}

struct SegmentOutput {
    LabelMap mask;
    std::vector<TraceRow> trace;
    Centroids centroids;
    std::optional<ScalarField> bias;
    bool converged = false;
};

SegmentOutput run_solver(const Image& x, const RunConfig& c) {
    const InitKind init = parse_init_kind(c.init);
    if (c.solver == "levelset") {
        LevelSetParams p;
        p.phases = c.phases;
        p.lambda = *c.lambda;
        p.dt = c.dt;
        p.eps_h = c.eps_h;
        p.max_iters = *c.max_iters;
        p.rel_tol = c.rel_tol;
        p.seed = c.seed;
        auto pack = [](LevelSetResult r) {
            return SegmentOutput{std::move(r.labels), std::move(r.trace), std::move(r.means), std::nullopt,
                                 r.converged};
        };
        try {
            return pack(segment_levelset(x, p));
        } catch (const SolverFailure<LevelSetResult>& e) {
            return pack(e.result());
        }
    }
    const MsConfig cfg = ms_config(c);
    if (c.solver == "ms-bias") {
        BiasConfig bc;
        bc.gamma = c.gamma;
        auto pack = [](MsBiasResult r) {
            LabelMap mask = hard_mask(r.segmentation);
            return SegmentOutput{std::move(mask), std::move(r.trace), std::move(r.centroids), std::move(r.bias.b),
                                 r.converged};
        };
        try {
            return pack(minimize_ms_bias(x, cfg, bc, init));
        } catch (const SolverFailure<MsBiasResult>& e) {
            SegmentOutput out = pack(e.result());
            out.converged = false;
            return out;
        }
    }
    auto pack = [](MsResult r) {
        LabelMap mask = hard_mask(r.segmentation);
        return SegmentOutput{std::move(mask), std::move(r.trace), std::move(r.centroids), std::nullopt, r.converged};
    };
    try {
        if (!c.labels.empty()) {
            CombinedLossConfig cc{c.beta, true};
            return pack(minimize_combined(x, read_labels(c.labels), cc, cfg, init));
        }
        return pack(minimize_ms(x, cfg, init));
    } catch (const SolverFailure<MsResult>& e) {
        SegmentOutput out = pack(e.result());
        out.converged = false;
        return out;
    }
}

int cmd_synth(const std::string& kind_name, std::size_t size, double sigma, std::uint64_t seed,
              const std::string& out_dir, std::ostream& out) {
    const PhantomKind kind = parse_phantom_kind(kind_name);
    const Phantom ph = make_phantom(kind, size, sigma, seed);
    const fs::path dir(out_dir);
    make_dir(dir);
    std::vector<fs::path> files{dir / "image.pgm", dir / "gt.pgm"};
    write_image(files[0], ph.image);
    write_labels(files[1], ph.labels);
    json manifest{{"command", "synth"}, {"kind", kind_name}, {"size", size}, {"sigma", sigma}, {"seed", seed},
                  {"height", ph.image.height()}, {"width", ph.image.width()}, {"image", "image.pgm"},
                  {"labels", "gt.pgm"}};
    if (ph.bias) {
        files.push_back(dir / "bias_true.bin");
        write_raw_f64(files.back(), *ph.bias);
        manifest["bias"] = "bias_true.bin";
    }
    files.insert(files.begin() + 2, dir / "manifest.json");
    write_json(dir / "manifest.json", manifest);
    for (const auto& f : files) out << f.string() << '\n';
    return kExitOk;
}

int cmd_segment(RunConfig c, std::ostream& out, std::ostream& err) {
    c.resolve();
    if (c.input.empty() || c.output.empty()) throw ParameterError("segment needs an input image and an output directory");
    const Image x = read_image(c.input);
    const fs::path dir(c.output);
    make_dir(dir);

    const SegmentOutput result = run_solver(x, c);
    write_labels(dir / "mask.pgm", result.mask);
    write_trace_csv(dir / "trace.csv", result.trace, c.solver == "ms-bias");
    std::vector<fs::path> files{dir / "mask.pgm", dir / "trace.csv", dir / "run.json"};
    if (result.bias) {
        write_field_pgm(dir / "bias.pgm", *result.bias);
        write_raw_f64(dir / "bias.bin", *result.bias);
        files.push_back(dir / "bias.pgm");
        files.push_back(dir / "bias.bin");
    }
    json run = to_json(c);
    run["result"] = json{{"converged", result.converged},
                         {"iterations", result.trace.empty() ? 0 : result.trace.back().iter},
                         {"final_loss", result.trace.empty() ? 0.0 : result.trace.back().loss},
                         {"height", x.height()},
                         {"width", x.width()},
                         {"centroids", centroids_json(result.centroids)}};
    write_json(dir / "run.json", run);
    for (const auto& f : files) out << f.string() << '\n';
    if (!result.converged) {
        err << "msvar: " << c.solver << " did not reach rel_tol " << c.rel_tol << " within " << *c.max_iters
            << " iterations\n";
        return kExitNotConverged;
    }
    return kExitOk;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, std::optional<std::size_t> positive,
             std::ostream& out) {
    const LabelMap pred = read_labels(pred_path);
    const LabelMap gt = read_labels(gt_path);
    const ClusteringMetrics cm = clustering_metrics(pred, gt);
    out << "pred,gt,iou,dice,precision,recall,rc,pri,vi\n";
    out << pred_path << ',' << gt_path << ',';
    if (positive) {
        const OverlapMetrics om = overlap_metrics(pred, gt, *positive);
        out << fmt(om.iou) << ',' << fmt(om.dice) << ',' << fmt(om.precision) << ',' << fmt(om.recall) << ',';
    } else {
        out << ",,,,";
    }
    out << fmt(cm.rc) << ',' << fmt(cm.pri) << ',' << fmt(cm.vi) << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Relaxed Mumford-Shah segmentation", "msvar"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Write a synthetic phantom");
    std::string kind;
    std::size_t size = 64;
    double sigma = 0.0;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("kind", kind, "two-phase | four-phase | ramp-bias")->required();
    synth->add_option("size", size, "Side length in pixels")->required();
    synth->add_option("sigma", sigma, "Gaussian noise standard deviation")->required();
    synth->add_option("seed", synth_seed, "Noise seed")->required();
    synth->add_option("out_dir", synth_out, "Output directory")->required();

    auto* segment = app.add_subcommand("segment", "Segment an image");
    RunConfig rc;
    std::string config_path;
    double lambda = 0.0;
    std::size_t max_iters = 0;
    std::vector<std::string> paths;
    segment->add_option("--solver", rc.solver, "ms | ms-bias | levelset");
    segment->add_option("--classes", rc.classes, "Number of classes (ms, ms-bias)");
    auto* lambda_opt = segment->add_option("--lambda", lambda, "Length weight");
    segment->add_option("--gamma", rc.gamma, "Bias TV weight (ms-bias)");
    segment->add_option("--beta", rc.beta, "MS weight in the combined loss (with --labels)");
    segment->add_option("--eta", rc.eta, "Initial logit step");
    segment->add_option("--dt", rc.dt, "Initial level-set time step");
    auto* iters_opt = segment->add_option("--max-iters", max_iters, "Iteration cap");
    segment->add_option("--rel-tol", rc.rel_tol, "Relative loss change that stops the solver");
    segment->add_option("--seed", rc.seed, "Initialization seed");
    segment->add_option("--init", rc.init, "random | kmeans");
    segment->add_option("--phases", rc.phases, "Level functions (levelset): 1 or 2");
    segment->add_option("--mode", rc.mode, "frozen | full gradient through the centroids");
    segment->add_option("--labels", rc.labels, "Ground-truth PGM for the supervised term (ms)");
    segment->add_option("--eps-h", rc.eps_h, "Heaviside width (levelset)");
    segment->add_option("--config", config_path, "run.json whose fields serve as defaults");
    segment->add_option("paths", paths, "[image] [out_dir]")->expected(0, 2);

    auto* eval = app.add_subcommand("eval", "Compare a label map with ground truth");
    std::string pred_path;
    std::string gt_path;
    std::size_t positive = 0;
    eval->add_option("pred", pred_path, "Predicted label PGM")->required();
    eval->add_option("gt", gt_path, "Ground-truth label PGM")->required();
    auto* positive_opt = eval->add_option("--positive-class", positive, "Class for IoU/Dice/precision/recall");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "msvar: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        configure_threads_from_env();
        if (synth->parsed()) return cmd_synth(kind, size, sigma, synth_seed, synth_out, out);
        if (eval->parsed()) {
            return cmd_eval(pred_path, gt_path, positive_opt->count() > 0 ? std::optional(positive) : std::nullopt,
                            out);
        }
        // flags given on the command line override the config file
        RunConfig resolved;
        if (!config_path.empty()) from_json_file(config_path, resolved);
        auto overridden = [&](const char* name) { return segment->count(name) > 0; };
        if (overridden("--solver")) resolved.solver = rc.solver;
        if (overridden("--classes")) resolved.classes = rc.classes;
        if (lambda_opt->count() > 0) resolved.lambda = lambda;
        if (overridden("--gamma")) resolved.gamma = rc.gamma;
        if (overridden("--beta")) resolved.beta = rc.beta;
        if (overridden("--eta")) resolved.eta = rc.eta;
        if (overridden("--dt")) resolved.dt = rc.dt;
        if (iters_opt->count() > 0) resolved.max_iters = max_iters;
        if (overridden("--rel-tol")) resolved.rel_tol = rc.rel_tol;
        if (overridden("--seed")) resolved.seed = rc.seed;
        if (overridden("--init")) resolved.init = rc.init;
        if (overridden("--phases")) resolved.phases = rc.phases;
        if (overridden("--mode")) resolved.mode = rc.mode;
        if (overridden("--labels")) resolved.labels = rc.labels;
        if (overridden("--eps-h")) resolved.eps_h = rc.eps_h;
        if (paths.size() == 2) {
            resolved.input = paths[0];
            resolved.output = paths[1];
        } else if (paths.size() == 1) {
            // with a config the single path is the output directory
            if (config_path.empty()) {
                err << "msvar: segment needs <image> <out_dir>\n";
                return kExitUsage;
            }
            resolved.output = paths[0];
        } else if (config_path.empty()) {
            err << "msvar: segment needs <image> <out_dir>\n";
            return kExitUsage;
        }
        return cmd_segment(std::move(resolved), out, err);
    } catch (const Error& e) {
        err << "msvar: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "msvar: " << e.what() << '\n';
        return kExitInvalid;
    }
}

}  // namespace msvar::cli
