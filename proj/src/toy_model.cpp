#include "cotforge/toy_model.hpp"

#include "cotforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace cotforge {

namespace {
constexpr char kMagic[8] = {'C', 'F', 'T', 'M', '0', '0', '0', '1'};
}

size_t ToyModel::w_token_offset() const {
    return static_cast<size_t>(cfg_.vocab_size) * cfg_.embed_dim;
}
size_t ToyModel::w_context_offset() const {
    return w_token_offset() + static_cast<size_t>(cfg_.embed_dim) * cfg_.embed_dim;
}
size_t ToyModel::bias_offset() const {
    return w_context_offset() + static_cast<size_t>(cfg_.embed_dim) * cfg_.embed_dim;
}
size_t ToyModel::w_vocab_offset() const { return bias_offset() + cfg_.embed_dim; }
size_t ToyModel::b_vocab_offset() const {
    return w_vocab_offset() + static_cast<size_t>(cfg_.vocab_size) * cfg_.embed_dim;
}
size_t ToyModel::w_class_offset() const { return b_vocab_offset() + cfg_.vocab_size; }
size_t ToyModel::b_class_offset() const {
    return w_class_offset() + static_cast<size_t>(kNumClasses) * cfg_.embed_dim;
}

std::vector<ToyModel::BlockSpan> ToyModel::blocks() const {
    const size_t d = cfg_.embed_dim;
    const size_t v = cfg_.vocab_size;
    return {
        {"embedding", embedding_offset(), v * d},
        {"w_token", w_token_offset(), d * d},
        {"w_context", w_context_offset(), d * d},
        {"bias", bias_offset(), d},
        {"w_vocab", w_vocab_offset(), v * d},
        {"b_vocab", b_vocab_offset(), v},
        {"w_class", w_class_offset(), static_cast<size_t>(kNumClasses) * d},
        {"b_class", b_class_offset(), kNumClasses},
    };
}

ToyModel::ToyModel(ToyModelConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    if (cfg_.vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (cfg_.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    params_.assign(b_class_offset() + kNumClasses, 0.0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, cfg_.init_scale);
    // Weight matrices random, biases zero.
    auto randomize = [&](size_t offset, size_t count) {
        for (size_t i = 0; i < count; ++i) params_[offset + i] = dist(rng);
    };
    const size_t d = cfg_.embed_dim;
    const size_t v = cfg_.vocab_size;
    randomize(embedding_offset(), v * d);
    randomize(w_token_offset(), d * d);
    randomize(w_context_offset(), d * d);
    randomize(w_vocab_offset(), v * d);
    randomize(w_class_offset(), static_cast<size_t>(kNumClasses) * d);
}

ToyModel::ForwardCache ToyModel::forward(std::span<const int> input_ids) const {
    const size_t l = input_ids.size();
    const size_t d = cfg_.embed_dim;
    const size_t v = cfg_.vocab_size;
    if (l == 0) throw ShapeError("forward needs a non-empty sequence");
    for (int id : input_ids) {
        if (id < 0 || static_cast<size_t>(id) >= v) throw ShapeError("input id outside vocabulary");
    }

    ForwardCache cache;
    cache.embed.resize(l * d);
    cache.ctx.resize(l * d);
    cache.hidden.resize(l * d);
    cache.pooled.assign(d, 0.0);
    cache.logits.token_logits = TokenLogits(l, v);

    const double* E = params_.data() + embedding_offset();
    const double* Wt = params_.data() + w_token_offset();
    const double* Wx = params_.data() + w_context_offset();
    const double* b = params_.data() + bias_offset();
    const double* Wv = params_.data() + w_vocab_offset();
    const double* bv = params_.data() + b_vocab_offset();
    const double* Wc = params_.data() + w_class_offset();
    const double* bc = params_.data() + b_class_offset();

    std::vector<double> prefix(d, 0.0);
    for (size_t j = 0; j < l; ++j) {
        const double* e = E + static_cast<size_t>(input_ids[j]) * d;
        double* ej = cache.embed.data() + j * d;
        double* cj = cache.ctx.data() + j * d;
        double* hj = cache.hidden.data() + j * d;
        for (size_t i = 0; i < d; ++i) {
            ej[i] = e[i];
            prefix[i] += e[i];
            cj[i] = prefix[i] / static_cast<double>(j + 1);
        }
        for (size_t r = 0; r < d; ++r) {
            double acc = b[r];
            const double* wt_row = Wt + r * d;
            const double* wx_row = Wx + r * d;
            for (size_t i = 0; i < d; ++i) acc += wt_row[i] * ej[i] + wx_row[i] * cj[i];
            hj[r] = std::tanh(acc);
        }
        for (size_t k = 0; k < v; ++k) {
            double acc = bv[k];
            const double* wv_row = Wv + k * d;
            for (size_t i = 0; i < d; ++i) acc += wv_row[i] * hj[i];
            cache.logits.token_logits.at(j, k) = acc;
        }
        for (size_t i = 0; i < d; ++i) cache.pooled[i] += hj[i];
    }
    for (size_t i = 0; i < d; ++i) cache.pooled[i] /= static_cast<double>(l);
    for (size_t c = 0; c < kNumClasses; ++c) {
        double acc = bc[c];
        const double* wc_row = Wc + c * d;
        for (size_t i = 0; i < d; ++i) acc += wc_row[i] * cache.pooled[i];
        cache.logits.class_logits[c] = acc;
    }
    return cache;
}

void ToyModel::backward(std::span<const int> input_ids, const ForwardCache& cache,
                        const TokenLogits& d_token_logits,
                        const std::array<double, kNumClasses>& d_class_logits,
                        std::span<double> grad) const {
    const size_t l = input_ids.size();
    const size_t d = cfg_.embed_dim;
    const size_t v = cfg_.vocab_size;
    if (grad.size() != params_.size()) throw ShapeError("grad buffer size mismatch");
    if (d_token_logits.rows != l || d_token_logits.cols != v) {
        throw ShapeError("token logit gradient shape mismatch");
    }

    const double* Wt = params_.data() + w_token_offset();
    const double* Wx = params_.data() + w_context_offset();
    const double* Wv = params_.data() + w_vocab_offset();
    const double* Wc = params_.data() + w_class_offset();

    double* gE = grad.data() + embedding_offset();
    double* gWt = grad.data() + w_token_offset();
    double* gWx = grad.data() + w_context_offset();
    double* gb = grad.data() + bias_offset();
    double* gWv = grad.data() + w_vocab_offset();
    double* gbv = grad.data() + b_vocab_offset();
    double* gWc = grad.data() + w_class_offset();
    double* gbc = grad.data() + b_class_offset();

    // Class head; dh contribution is uniform over positions via the mean pool.
    std::vector<double> d_pooled(d, 0.0);
    for (size_t c = 0; c < kNumClasses; ++c) {
        const double dc = d_class_logits[c];
        gbc[c] += dc;
        const double* wc_row = Wc + c * d;
        double* gwc_row = gWc + c * d;
        for (size_t i = 0; i < d; ++i) {
            gwc_row[i] += dc * cache.pooled[i];
            d_pooled[i] += dc * wc_row[i];
        }
    }
    const double pool_scale = 1.0 / static_cast<double>(l);

    // Positions, then the causal prefix-mean chain via a suffix accumulator.
    std::vector<double> dh(d);
    std::vector<double> da(d);
    std::vector<double> de(l * d, 0.0);
    std::vector<double> dctx(l * d, 0.0);
    for (size_t j = 0; j < l; ++j) {
        const double* hj = cache.hidden.data() + j * d;
        const double* ej = cache.embed.data() + j * d;
        const double* cj = cache.ctx.data() + j * d;

        for (size_t i = 0; i < d; ++i) dh[i] = d_pooled[i] * pool_scale;
        for (size_t k = 0; k < v; ++k) {
            const double dz = d_token_logits.at(j, k);
            if (dz == 0.0) continue;
            gbv[k] += dz;
            const double* wv_row = Wv + k * d;
            double* gwv_row = gWv + k * d;
            for (size_t i = 0; i < d; ++i) {
                gwv_row[i] += dz * hj[i];
                dh[i] += dz * wv_row[i];
            }
        }
        for (size_t r = 0; r < d; ++r) {
            da[r] = dh[r] * (1.0 - hj[r] * hj[r]);
            gb[r] += da[r];
        }
        double* dej = de.data() + j * d;
        double* dcj = dctx.data() + j * d;
        for (size_t r = 0; r < d; ++r) {
            const double val = da[r];
            if (val == 0.0) continue;
            const double* wt_row = Wt + r * d;
            const double* wx_row = Wx + r * d;
            double* gwt_row = gWt + r * d;
            double* gwx_row = gWx + r * d;
            for (size_t i = 0; i < d; ++i) {
                gwt_row[i] += val * ej[i];
                gwx_row[i] += val * cj[i];
                dej[i] += val * wt_row[i];
                dcj[i] += val * wx_row[i];
            }
        }
    }

    // ctx_j = mean of embeddings up to j, so d(embed_k) collects dctx_j/(j+1)
    // for every j >= k.
    std::vector<double> suffix(d, 0.0);
    for (size_t j = l; j-- > 0;) {
        const double* dcj = dctx.data() + j * d;
        double* dej = de.data() + j * d;
        const double inv = 1.0 / static_cast<double>(j + 1);
        for (size_t i = 0; i < d; ++i) {
            suffix[i] += dcj[i] * inv;
            dej[i] += suffix[i];
        }
    }
    for (size_t j = 0; j < l; ++j) {
        double* row = gE + static_cast<size_t>(input_ids[j]) * d;
        const double* dej = de.data() + j * d;
        for (size_t i = 0; i < d; ++i) row[i] += dej[i];
    }
}

int ToyModel::predict_class(std::span<const int> input_ids) const {
    const auto cache = forward(input_ids);
    const auto& cl = cache.logits.class_logits;
    return static_cast<int>(std::max_element(cl.begin(), cl.end()) - cl.begin());
}

void ToyModel::save(const std::filesystem::path& path, const nlohmann::ordered_json& extras) const {
    nlohmann::ordered_json header;
    header["format"] = "cotforge-toy-model";
    header["vocab_size"] = cfg_.vocab_size;
    header["embed_dim"] = cfg_.embed_dim;
    header["init_scale"] = cfg_.init_scale;
    header["seed"] = seed_;
    header["param_count"] = params_.size();
    for (const auto& [k, v] : extras.items()) header[k] = v;
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(reinterpret_cast<const char*>(params_.data()),
              static_cast<std::streamsize>(params_.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path.string());
}

ToyModel ToyModel::load(const std::filesystem::path& path, nlohmann::ordered_json* header_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path.string());
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError(path.string() + ": not a toy model file");
    }
    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) throw ParseError(path.string() + ": truncated header");
    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad header: " + e.what());
    }

    ToyModelConfig cfg;
    cfg.vocab_size = header.at("vocab_size").get<int>();
    cfg.embed_dim = header.at("embed_dim").get<int>();
    cfg.init_scale = header.value("init_scale", 0.3);
    ToyModel model(cfg, header.value("seed", 0ull));
    const size_t count = header.at("param_count").get<size_t>();
    if (count != model.params_.size()) {
        throw ParseError(path.string() + ": parameter count does not match shape manifest");
    }
    in.read(reinterpret_cast<char*>(model.params_.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw ParseError(path.string() + ": truncated parameter block");
    if (header_out) *header_out = std::move(header);
    return model;
}

} // namespace cotforge
