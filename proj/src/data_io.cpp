#include "llc/data_io.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "llc/rng.hpp"

namespace llc {

using nlohmann::json;

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    if (off + 4 > b.size())
        throw Error("truncated file at byte offset " + std::to_string(off));
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    auto ib = read_file(images_path);
    auto lb = read_file(labels_path);
    if (ib.size() < 16) throw Error(images_path + ": truncated IDX header");
    if (lb.size() < 8) throw Error(labels_path + ": truncated IDX header");
    if (be32(ib, 0) != 0x00000803u)
        throw Error(images_path + ": bad IDX magic at byte offset 0 (want 0x00000803)");
    if (be32(lb, 0) != 0x00000801u)
        throw Error(labels_path + ": bad IDX magic at byte offset 0 (want 0x00000801)");
    std::size_t m = be32(ib, 4), rows = be32(ib, 8), cols = be32(ib, 12);
    std::size_t ml = be32(lb, 4);
    if (m != ml)
        throw Error("IDX image/label count mismatch: " + std::to_string(m) + " vs " +
                    std::to_string(ml));
    if (m == 0) throw Error(images_path + ": empty IDX file");
    std::size_t d = rows * cols;
    if (ib.size() != 16 + m * d)
        throw Error(images_path + ": truncated image payload at byte offset " +
                    std::to_string(ib.size()));
    if (lb.size() != 8 + m)
        throw Error(labels_path + ": truncated label payload at byte offset " +
                    std::to_string(lb.size()));
    Dataset ds;
    ds.inputs = Tensor({m, d});
    for (std::size_t i = 0; i < m * d; ++i)
        ds.inputs.data[i] = static_cast<double>(ib[16 + i]) / 255.0;
    ds.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) ds.labels[i] = static_cast<int>(lb[8 + i]);
    return ds;
}

Dataset load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open file: " + path);
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t dim = 0, line_no = 0;
    std::string line;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw Error(path + ": line " + std::to_string(line_no) +
                            ": cannot parse field '" + cell + "'");
            }
        }
        if (row.size() < 2)
            throw Error(path + ": line " + std::to_string(line_no) + ": too few fields");
        if (dim == 0) dim = row.size() - 1;
        if (row.size() - 1 != dim)
            throw Error(path + ": line " + std::to_string(line_no) +
                        ": inconsistent field count");
        labels.push_back(static_cast<int>(row[0]));
        values.insert(values.end(), row.begin() + 1, row.end());
    }
    if (labels.empty()) throw Error(path + ": no data rows");
    Dataset ds;
    ds.inputs = Tensor({labels.size(), dim}, std::move(values));
    ds.labels = std::move(labels);
    return ds;
}

Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                    std::uint64_t seed, double separation) {
    if (classes == 0 || per_class == 0 || dim == 0)
        throw Error("synth_blobs: counts must be positive");
    Rng rng(seed);
    // unit-direction class means scaled by the separation factor
    std::vector<double> means(classes * dim);
    for (std::size_t c = 0; c < classes; ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            means[c * dim + j] = rng.normal();
            norm += means[c * dim + j] * means[c * dim + j];
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < dim; ++j)
            means[c * dim + j] *= separation / norm;
    }
    std::size_t m = classes * per_class;
    Tensor x({m, dim});
    std::vector<int> y(m);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t s = 0; s < per_class; ++s) {
            std::size_t r = c * per_class + s;
            y[r] = static_cast<int>(c);
            for (std::size_t j = 0; j < dim; ++j)
                x.at(r, j) = means[c * dim + j] + rng.normal();
        }
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    rng.shuffle(order);
    Dataset ds;
    ds.inputs = Tensor({m, dim});
    ds.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        ds.labels[i] = y[order[i]];
        std::copy_n(x.data.begin() + static_cast<long>(order[i] * dim), dim,
                    ds.inputs.data.begin() + static_cast<long>(i * dim));
    }
    return ds;
}

namespace {

constexpr char kMagic[4] = {'L', 'L', 'C', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

json layer_manifest(const DenseLayer& l) {
    json j;
    j["out"] = l.out_dim();
    j["in"] = l.in_dim();
    j["activation"] = l.activation == Activation::ReLU ? "relu" : "identity";
    j["factor_part"] = l.factor_part;
    j["dtype"] = "f64";
    if (l.in_quant) {
        j["in_quant"] = {{"scale", l.in_quant->scale},
                         {"bits", l.in_quant->bits},
                         {"dir", l.in_quant->dir == RoundDir::Positive ? "pos" : "neg"}};
    }
    return j;
}

void append_blob(std::string& out, const Tensor& t) {
    static_assert(sizeof(double) == 8);
    std::size_t off = out.size();
    out.resize(off + t.size() * 8);
    std::memcpy(out.data() + off, t.data.data(), t.size() * 8);
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    model.validate();
    json manifest;
    manifest["version"] = kFormatVersion;
    manifest["layers"] = json::array();
    for (const auto& l : model.layers) manifest["layers"].push_back(layer_manifest(l));
    std::string mtext = manifest.dump();

    std::string out;
    out.append(kMagic, 4);
    std::uint32_t ver = kFormatVersion;
    std::uint64_t mlen = mtext.size();
    out.append(reinterpret_cast<const char*>(&ver), 4);
    out.append(reinterpret_cast<const char*>(&mlen), 8);
    out += mtext;
    for (const auto& l : model.layers) {
        append_blob(out, l.weight);
        append_blob(out, l.bias);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write file: " + path);
    f.write(out.data(), static_cast<long>(out.size()));
    if (!f) throw Error("write failed: " + path);
}

Model load_model(const std::string& path) {
    auto b = read_file(path);
    if (b.size() < 16 || std::memcmp(b.data(), kMagic, 4) != 0)
        throw Error(path + ": not a LLCM model file");
    std::uint32_t ver;
    std::uint64_t mlen;
    std::memcpy(&ver, b.data() + 4, 4);
    std::memcpy(&mlen, b.data() + 8, 8);
    if (ver != kFormatVersion)
        throw Error(path + ": unsupported format version " + std::to_string(ver));
    if (16 + mlen > b.size()) throw Error(path + ": truncated manifest");
    json manifest;
    try {
        manifest = json::parse(b.begin() + 16, b.begin() + 16 + static_cast<long>(mlen));
    } catch (const json::exception& e) {
        throw Error(path + ": manifest parse error: " + e.what());
    }
    Model m;
    std::size_t off = 16 + mlen;
    for (const auto& lj : manifest.at("layers")) {
        DenseLayer l;
        std::size_t out = lj.at("out"), in = lj.at("in");
        std::string name = "layer " + std::to_string(m.layers.size() + 1);
        l.activation = lj.at("activation") == "relu" ? Activation::ReLU
                                                     : Activation::Identity;
        l.factor_part = lj.value("factor_part", false);
        if (lj.contains("in_quant")) {
            InputQuant q;
            q.scale = lj["in_quant"].at("scale");
            q.bits = lj["in_quant"].at("bits");
            q.dir = lj["in_quant"].at("dir") == "pos" ? RoundDir::Positive
                                                      : RoundDir::Negative;
            l.in_quant = q;
        }
        auto take = [&](std::vector<std::size_t> shape, const char* what) {
            std::size_t n = Tensor::count_of(shape);
            if (off + n * 8 > b.size())
                throw Error(path + ": truncated blob for " + name + " " + what);
            Tensor t(std::move(shape));
            std::memcpy(t.data.data(), b.data() + off, n * 8);
            off += n * 8;
            return t;
        };
        l.weight = take({out, in}, "weight");
        l.bias = take({out}, "bias");
        m.layers.push_back(std::move(l));
    }
    if (off != b.size()) throw Error(path + ": trailing bytes after blobs");
    m.validate();
    return m;
}

namespace {

json decision_to_json(const LayerDecision& d) {
    return {{"layer", d.layer}, {"action", d.action},     {"bits", d.bits},
            {"rank", d.rank},   {"bytes", d.bytes}};
}

}  // namespace

std::string report_to_json(const Report& r) {
    json j;
    j["original"] = {{"loss_calib", r.original_loss_calib},
                     {"loss_holdout", r.original_loss_holdout},
                     {"top1_calib", r.original_top1_calib},
                     {"top1_holdout", r.original_top1_holdout}};
    j["compressed"] = {{"loss_calib", r.compressed_loss_calib},
                       {"loss_holdout", r.compressed_loss_holdout},
                       {"top1_calib", r.compressed_top1_calib},
                       {"top1_holdout", r.compressed_top1_holdout}};
    j["original_bytes"] = r.original_bytes;
    j["compressed_bytes"] = r.compressed_bytes;
    j["drop_rate"] = r.drop_rate;
    j["decisions"] = json::array();
    for (const auto& d : r.decisions) j["decisions"].push_back(decision_to_json(d));
    j["curve"] = json::array();
    for (const auto& c : r.curve)
        j["curve"].push_back(
            {{"level", c.level}, {"loss", c.loss}, {"top1", c.top1}, {"bytes", c.bytes}});
    return j.dump(2);
}

Report report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("report parse error: ") + e.what());
    }
    Report r;
    r.original_loss_calib = j.at("original").at("loss_calib");
    r.original_loss_holdout = j.at("original").at("loss_holdout");
    r.original_top1_calib = j.at("original").at("top1_calib");
    r.original_top1_holdout = j.at("original").at("top1_holdout");
    r.compressed_loss_calib = j.at("compressed").at("loss_calib");
    r.compressed_loss_holdout = j.at("compressed").at("loss_holdout");
    r.compressed_top1_calib = j.at("compressed").at("top1_calib");
    r.compressed_top1_holdout = j.at("compressed").at("top1_holdout");
    r.original_bytes = j.at("original_bytes");
    r.compressed_bytes = j.at("compressed_bytes");
    r.drop_rate = j.at("drop_rate");
    for (const auto& dj : j.at("decisions")) {
        LayerDecision d;
        d.layer = dj.at("layer");
        d.action = dj.at("action");
        d.bits = dj.at("bits");
        d.rank = dj.at("rank");
        d.bytes = dj.at("bytes");
        r.decisions.push_back(d);
    }
    for (const auto& cj : j.at("curve")) {
        CurvePoint c;
        c.level = cj.at("level");
        c.loss = cj.at("loss");
        c.top1 = cj.at("top1");
        c.bytes = cj.at("bytes");
        r.curve.push_back(c);
    }
    return r;
}

void emit_report(const Report& r, const std::string& path_json,
                 const std::string& path_csv) {
    if (!path_json.empty()) {
        std::ofstream f(path_json);
        if (!f) throw Error("cannot write file: " + path_json);
        f << report_to_json(r) << "\n";
        if (!f) throw Error("write failed: " + path_json);
    }
    if (!path_csv.empty()) {
        std::ofstream f(path_csv);
        if (!f) throw Error("cannot write file: " + path_csv);
        f << "level,loss,top1,bytes\n";
        for (const auto& c : r.curve) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%zu\n", c.level, c.loss,
                          c.top1, c.bytes);
            f << buf;
        }
        if (!f) throw Error("write failed: " + path_csv);
    }
}

}  // namespace llc
