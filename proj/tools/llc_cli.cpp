// llc: post-training lossless compression toolkit for small dense nets.
//
// Subcommands: train-fixture, calibrate, bounds, quantize, decompose, verify.
// Exit codes: 0 success / verification PASS, 2 verification FAIL,
// 1 operational error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "llc/data_io.hpp"
#include "llc/pipeline.hpp"

namespace {

struct DataArgs {
    std::string spec;
    std::string format = "csv";
    std::uint64_t seed = 1;
};

void add_data_flags(CLI::App* cmd, DataArgs& d, bool required = true) {
    auto* opt = cmd->add_option(
        "--data", d.spec,
        "dataset: csv path | idx 'images,labels' pair | synth "
        "'classes:per_class:dim[:sep]'");
    if (required) opt->required();
    cmd->add_option("--data-format", d.format, "idx, csv or synth")
        ->check(CLI::IsMember({"idx", "csv", "synth"}));
    cmd->add_option("--seed", d.seed, "RNG seed (synthetic data, fixtures)");
}

std::vector<std::string> split_str(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) parts.push_back(tok);
    return parts;
}

llc::Dataset load_data(const DataArgs& d) {
    if (d.format == "csv") return llc::load_csv(d.spec);
    if (d.format == "idx") {
        auto parts = split_str(d.spec, ',');
        if (parts.size() != 2)
            throw llc::Error("idx data spec must be 'images_path,labels_path'");
        return llc::load_idx(parts[0], parts[1]);
    }
    auto parts = split_str(d.spec, ':');
    if (parts.size() < 3 || parts.size() > 4)
        throw llc::Error("synth data spec must be 'classes:per_class:dim[:sep]'");
    double sep = parts.size() == 4 ? std::stod(parts[3]) : 3.0;
    return llc::synth_blobs(std::stoul(parts[0]), std::stoul(parts[1]),
                            std::stoul(parts[2]), d.seed, sep);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw llc::Error("cannot write file: " + path);
    f << text << "\n";
}

void print_report_summary(const llc::Report& r) {
    std::printf("original:   calib loss %.6g  top1 %.4f | holdout loss %.6g  top1 %.4f\n",
                r.original_loss_calib, r.original_top1_calib, r.original_loss_holdout,
                r.original_top1_holdout);
    std::printf("compressed: calib loss %.6g  top1 %.4f | holdout loss %.6g  top1 %.4f\n",
                r.compressed_loss_calib, r.compressed_top1_calib,
                r.compressed_loss_holdout, r.compressed_top1_holdout);
    std::printf("bytes: %zu -> %zu (drop rate %.4f)\n", r.original_bytes,
                r.compressed_bytes, r.drop_rate);
    for (const auto& d : r.decisions) {
        std::printf("  layer %zu: %s", d.layer, d.action.c_str());
        if (d.action == "quantize") std::printf(" %d-bit", d.bits);
        if (d.action == "factor") std::printf(" rank %zu", d.rank);
        std::printf(" (%zu bytes)\n", d.bytes);
    }
}

int main_checked(int argc, char** argv) {
    CLI::App app{"post-training lossless compression for dense nets"};
    app.require_subcommand(1);

    // ---- train-fixture ----
    auto* train = app.add_subcommand("train-fixture",
                                     "train a small MLP fixture with mini-batch SGD");
    DataArgs train_data;
    add_data_flags(train, train_data);
    std::string hidden = "32";
    int epochs = 30;
    double lr = 0.1;
    std::string out_model;
    train->add_option("--hidden", hidden, "comma-separated hidden widths (input side first)");
    train->add_option("--epochs", epochs);
    train->add_option("--lr", lr);
    train->add_option("--out-model", out_model)->required();

    // ---- calibrate ----
    auto* cal = app.add_subcommand("calibrate", "collect mean gradient statistics");
    DataArgs cal_data;
    std::string cal_model, cal_out;
    add_data_flags(cal, cal_data);
    cal->add_option("--model", cal_model)->required();
    cal->add_option("--out-report", cal_out);
    double calib_frac = 0.2;
    cal->add_option("--calib-frac", calib_frac);

    // ---- bounds ----
    auto* bounds = app.add_subcommand("bounds",
                                      "measure theory-vs-practice gaps per noise regime");
    DataArgs bounds_data;
    std::string bounds_model, bounds_out, bounds_csv;
    llc::RunConfig bounds_cfg;
    add_data_flags(bounds, bounds_data);
    bounds->add_option("--model", bounds_model)->required();
    bounds->add_option("--calib-frac", bounds_cfg.calib_frac);
    bounds->add_option("--out-report", bounds_out);
    bounds->add_option("--curves-csv", bounds_csv);

    // ---- quantize ----
    auto* quant = app.add_subcommand("quantize",
                                     "mixed-precision quantization under a byte budget");
    DataArgs quant_data;
    std::string quant_model, quant_out_model, quant_out_report, quant_csv;
    std::string levels_csv;
    llc::RunConfig quant_cfg;
    add_data_flags(quant, quant_data);
    quant->add_option("--model", quant_model)->required();
    auto* cap_opt = quant->add_option("--capacity-bytes", quant_cfg.capacity_bytes,
                                      "inclusive byte budget for all weights");
    auto* drop_opt =
        quant->add_option("--drop-rate", quant_cfg.drop_rate, "target byte reduction in [0,1)");
    cap_opt->excludes(drop_opt);
    quant->add_option("--levels", levels_csv, "comma list from {fp,16,8,4,2}");
    quant->add_option("--error-max", quant_cfg.error_max);
    quant->add_option("--calib-frac", quant_cfg.calib_frac);
    quant->add_option("--out-model", quant_out_model);
    quant->add_option("--out-report", quant_out_report);
    quant->add_option("--curves-csv", quant_csv);

    // ---- decompose ----
    auto* dec = app.add_subcommand("decompose",
                                   "gradient-sign-constrained low-rank decomposition");
    DataArgs dec_data;
    std::string dec_model, dec_out_model, dec_out_report;
    llc::RunConfig dec_cfg;
    add_data_flags(dec, dec_data);
    dec->add_option("--model", dec_model)->required();
    dec->add_option("--gamma", dec_cfg.lowrank.gamma);
    dec->add_flag("--gamma-relative", dec_cfg.lowrank.gamma_relative,
                  "interpret gamma as a fraction of each layer's Frobenius norm");
    dec->add_option("--rank-max", dec_cfg.lowrank.rank_max);
    dec->add_option("--calib-frac", dec_cfg.calib_frac);
    dec->add_option("--out-model", dec_out_model);
    dec->add_option("--out-report", dec_out_report);

    // ---- verify ----
    auto* ver = app.add_subcommand("verify", "certify the lossless property");
    DataArgs ver_data;
    std::string ver_orig, ver_comp;
    double tol_abs = 0.0;
    add_data_flags(ver, ver_data);
    ver->add_option("original", ver_orig, "original model path")->required();
    ver->add_option("compressed", ver_comp, "compressed model path")->required();
    ver->add_option("--tol-abs", tol_abs);

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        llc::Dataset data = load_data(train_data);
        std::size_t classes = 0;
        for (int l : data.labels) classes = std::max<std::size_t>(classes, l + 1);
        std::vector<std::size_t> dims{data.dim()};
        for (const auto& h : split_str(hidden, ','))
            if (!h.empty()) dims.push_back(std::stoul(h));
        dims.push_back(classes);
        std::vector<llc::Activation> acts(dims.size() - 1, llc::Activation::ReLU);
        acts.back() = llc::Activation::Identity;
        llc::Model m = llc::make_mlp(dims, acts, train_data.seed);
        m = llc::train_fixture(std::move(m), data, epochs, lr, train_data.seed);
        llc::save_model(m, out_model);
        llc::LossStats s = llc::loss_and_accuracy(m, data);
        std::printf("trained fixture: loss %.6g  top1 %.4f  -> %s\n", s.mean_loss, s.top1,
                    out_model.c_str());
        return 0;
    }

    if (cal->parsed()) {
        llc::Model m = llc::load_model(cal_model);
        llc::Dataset data = load_data(cal_data);
        auto [calib, holdout] = data.split(calib_frac);
        (void)holdout;
        llc::GradientProfile p = llc::calibrate(m, calib);
        nlohmann::json j;
        j["sample_count"] = p.sample_count;
        j["grad_dot_one"] = p.grad_dot_one;
        j["weight_grad_dot_one"] = p.weight_grad_dot_one;
        std::string text = j.dump(2);
        if (!cal_out.empty())
            write_text(cal_out, text);
        else
            std::printf("%s\n", text.c_str());
        return 0;
    }

    if (bounds->parsed()) {
        llc::Model m = llc::load_model(bounds_model);
        llc::Dataset data = load_data(bounds_data);
        bounds_cfg.seed = bounds_data.seed;
        auto rows = llc::run_bounds(m, data, bounds_cfg);
        std::string text = llc::bounds_to_json(rows);
        if (!bounds_out.empty())
            write_text(bounds_out, text);
        else
            std::printf("%s\n", text.c_str());
        if (!bounds_csv.empty()) llc::bounds_to_csv(rows, bounds_csv);
        return 0;
    }

    if (quant->parsed()) {
        llc::Model m = llc::load_model(quant_model);
        llc::Dataset data = load_data(quant_data);
        if (!levels_csv.empty()) quant_cfg.levels = llc::parse_levels(levels_csv);
        if (*drop_opt && quant_cfg.capacity_bytes == 0 && quant_cfg.drop_rate < 0.0)
            throw llc::Error("quantize: drop-rate must be >= 0");
        llc::QuantizeResult res = llc::run_quantize(m, data, quant_cfg);
        print_report_summary(res.report);
        if (!quant_out_model.empty()) llc::save_model(res.model, quant_out_model);
        llc::emit_report(res.report, quant_out_report, quant_csv);
        return 0;
    }

    if (dec->parsed()) {
        llc::Model m = llc::load_model(dec_model);
        llc::Dataset data = load_data(dec_data);
        llc::DecomposeRunResult res = llc::run_decompose(m, data, dec_cfg);
        print_report_summary(res.report);
        std::printf("%s\n", llc::traces_to_json(res.traces).c_str());
        if (!dec_out_model.empty()) llc::save_model(res.model, dec_out_model);
        llc::emit_report(res.report, dec_out_report, "");
        return 0;
    }

    if (ver->parsed()) {
        llc::Model original = llc::load_model(ver_orig);
        llc::Model compressed = llc::load_model(ver_comp);
        llc::Dataset data = load_data(ver_data);
        llc::VerifyResult v = llc::run_verify(original, compressed, data, tol_abs);
        std::printf("original loss %.17g, compressed loss %.17g, delta %.17g\n",
                    v.original_loss, v.compressed_loss, v.delta);
        std::printf("%s\n", v.pass ? "PASS" : "FAIL");
        return v.pass ? 0 : 2;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return main_checked(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
