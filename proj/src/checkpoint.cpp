#include "pvrnn/checkpoint.h"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "pvrnn/config.h"

namespace pvrnn {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'P', 'V', 'R', 'N', 'N', 'C', 'K', 'P'};

template <class T>
void put_le(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > data_.size()) {
            throw Error(ErrorKind::format, path_ + ": truncated checkpoint while reading " + what);
        }
    }
    template <class T>
    T get_le(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    double f64(const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(what)); }
    bool at_end() const { return pos_ == data_.size(); }

private:
    const std::string& data_;
    std::string path_;
    std::size_t pos_ = 0;
};

struct Block {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    std::span<const double> src;
};

}  // namespace

bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.network == b.network && a.params == b.params && a.adaptive == b.adaptive &&
           a.adam == b.adam && a.epoch == b.epoch && std::bit_cast<std::uint64_t>(a.w) == std::bit_cast<std::uint64_t>(b.w) &&
           a.seed == b.seed && a.provenance == b.provenance && a.history == b.history;
}

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::vector<Block> blocks;
    ckpt.params.for_each_block([&blocks](const std::string& name, const Matrix& m) {
        blocks.push_back({"param/" + name, m.rows(), m.cols(), m.values()});
    });
    for (std::size_t s = 0; s < ckpt.adaptive.size(); ++s) {
        const AdaptiveVectors& a = ckpt.adaptive[s];
        for (std::size_t k = 0; k < a.layer_count(); ++k) {
            const std::string base = "adaptive/" + std::to_string(s) + "/";
            blocks.push_back({base + "mu/" + std::to_string(k), a.mu[k].rows(), a.mu[k].cols(), a.mu[k].values()});
            blocks.push_back({base + "log_sigma/" + std::to_string(k), a.log_sigma[k].rows(),
                              a.log_sigma[k].cols(), a.log_sigma[k].values()});
        }
    }
    const auto& m = ckpt.adam.first_moments();
    const auto& v = ckpt.adam.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
        blocks.push_back({"adam/m/" + std::to_string(i), 1, m[i].size(), m[i]});
        blocks.push_back({"adam/v/" + std::to_string(i), 1, v[i].size(), v[i]});
    }
    std::vector<double> history;
    for (const HistoryRow& r : ckpt.history) {
        history.insert(history.end(), {static_cast<double>(r.epoch), r.likelihood, r.kl, r.total});
    }
    blocks.push_back({"history", ckpt.history.size(), 4, history});

    json header;
    header["network"] = network_to_json(ckpt.network);
    header["epoch"] = ckpt.epoch;
    header["w"] = ckpt.w;
    header["w_bits"] = std::bit_cast<std::uint64_t>(ckpt.w);
    header["seed"] = ckpt.seed;
    header["provenance"] = ckpt.provenance;
    header["rng_version"] = RngStream::kVersion;
    header["sequences"] = ckpt.adaptive.size();
    const AdamConfig& ac = ckpt.adam.config();
    header["adam"] = {{"alpha", ac.alpha}, {"beta1", ac.beta1}, {"beta2", ac.beta2}, {"eps", ac.eps},
                      {"t", ckpt.adam.step_count()}, {"moment_blocks", m.size()}};
    json table = json::array();
    for (const Block& b : blocks) table.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    header["blocks"] = table;
    const std::string header_text = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, header_text.size());
    out += header_text;
    for (const Block& b : blocks) {
        for (double x : b.src) put_f64(out, x);
    }

    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorKind::io, "cannot write checkpoint " + tmp.string());
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw Error(ErrorKind::io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::io, "cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io, "cannot open checkpoint " + path.string());
    const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader in(data, path.string());

    if (in.bytes(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
        throw Error(ErrorKind::format, path.string() + ": not a checkpoint (bad magic)");
    }
    const auto version = in.get_le<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::format, path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = in.get_le<std::uint64_t>("header length");
    json header;
    try {
        header = json::parse(in.bytes(static_cast<std::size_t>(header_len), "header"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::format, path.string() + ": corrupt checkpoint header: " + e.what());
    }

    Checkpoint c;
    try {
        c.network = network_from_json(header.at("network"), "network");
        c.epoch = header.at("epoch").get<std::uint64_t>();
        c.w = std::bit_cast<double>(header.at("w_bits").get<std::uint64_t>());
        c.seed = header.at("seed").get<std::uint64_t>();
        c.provenance = header.at("provenance").get<std::string>();
        const json& adam = header.at("adam");
        AdamConfig ac;
        ac.alpha = adam.at("alpha").get<double>();
        ac.beta1 = adam.at("beta1").get<double>();
        ac.beta2 = adam.at("beta2").get<double>();
        ac.eps = adam.at("eps").get<double>();
        c.adam = AdamState(ac);

        const std::size_t sequences = header.at("sequences").get<std::size_t>();
        const std::size_t moment_blocks = adam.at("moment_blocks").get<std::size_t>();
        const json& table = header.at("blocks");

        c.params = Parameters::zeros(c.network);
        std::vector<std::pair<std::string, Matrix*>> expected;
        c.params.for_each_block([&expected](const std::string& name, Matrix& m) {
            expected.emplace_back("param/" + name, &m);
        });
        std::size_t idx = 0;
        auto next_entry = [&](const std::string& name) -> std::pair<std::size_t, std::size_t> {
            if (idx >= table.size()) throw Error(ErrorKind::format, path.string() + ": block table ends before " + name);
            const json& e = table.at(idx++);
            if (e.at("name").get<std::string>() != name) {
                throw Error(ErrorKind::format, path.string() + ": expected block " + name + ", found " +
                                                   e.at("name").get<std::string>());
            }
            return {e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>()};
        };
        auto read_into = [&](std::span<double> dst, const std::string& name) {
            for (double& x : dst) x = in.f64(name.c_str());
        };

        for (auto& [name, m] : expected) {
            const auto [r, cc] = next_entry(name);
            if (r != m->rows() || cc != m->cols()) {
                throw Error(ErrorKind::format, path.string() + ": block " + name + " has shape " +
                                                   std::to_string(r) + "x" + std::to_string(cc));
            }
            read_into(m->values(), name);
        }
        for (std::size_t s = 0; s < sequences; ++s) {
            AdaptiveVectors a;
            for (std::size_t k = 0; k < c.network.layers.size(); ++k) {
                const std::string base = "adaptive/" + std::to_string(s) + "/";
                auto [r, cc] = next_entry(base + "mu/" + std::to_string(k));
                a.mu.emplace_back(r, cc);
                read_into(a.mu.back().values(), base + "mu");
                std::tie(r, cc) = next_entry(base + "log_sigma/" + std::to_string(k));
                a.log_sigma.emplace_back(r, cc);
                read_into(a.log_sigma.back().values(), base + "log_sigma");
            }
            c.adaptive.push_back(std::move(a));
        }
        std::vector<Vector> m(moment_blocks), v(moment_blocks);
        for (std::size_t i = 0; i < moment_blocks; ++i) {
            auto [r, cc] = next_entry("adam/m/" + std::to_string(i));
            m[i].resize(r * cc);
            read_into(m[i], "adam/m");
            std::tie(r, cc) = next_entry("adam/v/" + std::to_string(i));
            v[i].resize(r * cc);
            read_into(v[i], "adam/v");
        }
        c.adam.restore(adam.at("t").get<std::uint64_t>(), std::move(m), std::move(v));
        const auto [hr, hc] = next_entry("history");
        if (hc != 4) throw Error(ErrorKind::format, path.string() + ": history block must have 4 columns");
        for (std::size_t i = 0; i < hr; ++i) {
            HistoryRow row;
            row.epoch = static_cast<std::uint64_t>(in.f64("history"));
            row.likelihood = in.f64("history");
            row.kl = in.f64("history");
            row.total = in.f64("history");
            c.history.push_back(row);
        }
        if (idx != table.size()) throw Error(ErrorKind::format, path.string() + ": unexpected extra blocks");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::format, path.string() + ": malformed checkpoint header: " + e.what());
    }
    if (!in.at_end()) throw Error(ErrorKind::format, path.string() + ": trailing bytes after payload");
    return c;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::io, "sha256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::string& text) {
    return sha256_hex(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string file_sha256(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io, "cannot open " + path.string());
    const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return sha256_hex(data);
}

std::string parameters_hash(const Parameters& params) {
    std::string bytes;
    params.for_each_block([&bytes](const std::string& name, const Matrix& m) {
        bytes += name;
        for (double x : m.values()) put_f64(bytes, x);
    });
    return sha256_hex(bytes);
}

}  // namespace pvrnn
