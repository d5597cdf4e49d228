#include "fesr/datamodel.hpp"

#include "fesr/variants.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fesr {

void log_info(std::string_view message) { std::clog << "[fesr] " << message << '\n'; }
void log_warn(std::string_view message) { std::clog << "[fesr] warning: " << message << '\n'; }

namespace {

Image rescale_impl(auto values, int channels, int height, int width) {
    const auto expected = static_cast<std::size_t>(channels) * height * width;
    if (values.size() != expected) {
        throw DataError("rescale_to_unit: expected " + std::to_string(expected) + " values, got " +
                        std::to_string(values.size()));
    }
    Image out(channels, height, width);
    for (std::size_t i = 0; i < expected; ++i) {
        const double v = static_cast<double>(values[i]);
        if (!(v >= 0.0 && v <= 255.0)) {
            throw DataError("rescale_to_unit: value " + std::to_string(v) + " outside [0, 255]");
        }
        out.pixels[i] = static_cast<float>(v / 127.5 - 1.0);
    }
    return out;
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
template <class T>
std::string format_value(T v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

void parse_value(std::string_view text, std::string& out) { out = std::string(text); }
void parse_value(std::string_view text, bool& out) {
    if (text == "true" || text == "1") {
        out = true;
    } else if (text == "false" || text == "0") {
        out = false;
    } else {
        throw ConfigError("expected boolean, got '" + std::string(text) + "'");
    }
}
template <class T>
void parse_value(std::string_view text, T& out) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("cannot parse '" + std::string(text) + "'");
    }
    out = value;
}

template <class Cfg, class F>
void for_each_field(Cfg& c, F&& f) {
    f("variant", c.variant);
    f("seed", c.seed);
    f("image_size", c.image_size);
    f("channels", c.channels);
    f("num_classes", c.num_classes);
    f("latent_dim", c.latent_dim);
    f("lambda1", c.lambdas[0]);
    f("lambda2", c.lambdas[1]);
    f("lambda3", c.lambdas[2]);
    f("lambda4", c.lambdas[3]);
    f("lambda5", c.lambdas[4]);
    f("lambda6", c.lambdas[5]);
    f("p_pre", c.p_pre);
    f("p_max", c.p_max);
    f("learning_rate", c.learning_rate);
    f("beta1", c.beta1);
    f("beta2", c.beta2);
    f("batch_size", c.batch_size);
    f("gp_coeff", c.gp_coeff);
    f("critic_steps", c.critic_steps);
    f("base_width", c.base_width);
    f("max_width", c.max_width);
    f("recognizer_width", c.recognizer_width);
    f("recognizer_hidden", c.recognizer_hidden);
    f("feature_dim", c.feature_dim);
    f("frozen_backbone", c.frozen_backbone);
    f("dropout", c.dropout);
    f("identity_dim", c.identity_dim);
    f("embedder_steps", c.embedder_steps);
    f("same_subject_pairs", c.same_subject_pairs);
    f("identity_loss_on_synthesis", c.identity_loss_on_synthesis);
    f("checkpoint_every", c.checkpoint_every);
    f("fold_count", c.fold_count);
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

Image rescale_to_unit(std::span<const double> values, int channels, int height, int width) {
    return rescale_impl(values, channels, height, width);
}

Image rescale_to_unit(std::span<const std::uint8_t> values, int channels, int height, int width) {
    return rescale_impl(values, channels, height, width);
}

std::vector<std::uint8_t> to_bytes(const Image& image) {
    std::vector<std::uint8_t> out(image.size());
    std::transform(image.pixels.begin(), image.pixels.end(), out.begin(), [](float p) {
        const double v = std::clamp((static_cast<double>(p) + 1.0) * 127.5, 0.0, 255.0);
        return static_cast<std::uint8_t>(std::lround(v));
    });
    return out;
}

std::vector<float> ExpressionLabel::onehot() const {
    std::vector<float> v(static_cast<std::size_t>(num_classes), 0.0f);
    v.at(static_cast<std::size_t>(class_index)) = 1.0f;
    return v;
}

ExperimentConfig ExperimentConfig::paper_scale() {
    ExperimentConfig c;
    c.image_size = 128;
    c.channels = 3;
    c.num_classes = 6;
    c.base_width = 64;
    c.max_width = 1024;
    c.recognizer_width = 256;
    c.recognizer_hidden = 2048;
    c.feature_dim = 512;
    c.frozen_backbone = true;
    return c;
}

std::string ExperimentConfig::serialize() const {
    std::map<std::string, std::string> kv;
    for_each_field(*this, [&](const char* key, const auto& field) { kv[key] = format_value(field); });
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
    std::map<std::string, std::string, std::less<>> kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key(trim(line.substr(0, eq)));
        if (!kv.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
    }

    ExperimentConfig cfg;
    std::size_t consumed = 0;
    for_each_field(cfg, [&](const char* key, auto& field) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            return;
        }
        try {
            parse_value(it->second, field);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("config key '") + key + "': " + e.what());
        }
        ++consumed;
    });
    if (consumed != kv.size()) {
        for (const auto& [key, value] : kv) {
            bool known = false;
            for_each_field(cfg, [&](const char* k, auto&) { known = known || key == k; });
            if (!known) {
                throw ConfigError("unknown config key '" + key + "'");
            }
        }
    }
    return cfg;
}

std::string ExperimentConfig::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : serialize()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
    std::vector<std::string> v;
    if (c.p_pre > c.p_max) {
        v.push_back("p_pre <= p_max violated (p_pre=" + std::to_string(c.p_pre) + ", p_max=" + std::to_string(c.p_max) +
                    ")");
    }
    if (c.p_pre < 0 || c.p_max < 0) {
        v.emplace_back("iteration counts p_pre and p_max must be non-negative");
    }
    for (std::size_t i = 0; i < c.lambdas.size(); ++i) {
        if (!(c.lambdas[i] >= 0.0) || !std::isfinite(c.lambdas[i])) {
            v.push_back("lambda" + std::to_string(i + 1) + " must be a non-negative finite number (got " +
                        format_value(c.lambdas[i]) + ")");
        }
    }
    if (c.batch_size < 1) {
        v.emplace_back("batch_size must be >= 1");
    }
    if (c.image_size < 32 || !is_power_of_two(c.image_size)) {
        v.emplace_back("image_size must be a power of two >= 32");
    }
    if (c.channels != 1 && c.channels != 3) {
        v.emplace_back("channels must be 1 or 3");
    }
    if (c.num_classes < 2) {
        v.emplace_back("num_classes must be >= 2");
    }
    if (c.latent_dim < 1) {
        v.emplace_back("latent_dim must be >= 1");
    }
    if (!(c.learning_rate > 0.0)) {
        v.emplace_back("learning_rate must be positive");
    }
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
        v.emplace_back("beta1 and beta2 must lie in [0, 1)");
    }
    if (!(c.gp_coeff >= 0.0)) {
        v.emplace_back("gp_coeff must be non-negative");
    }
    if (c.critic_steps < 1) {
        v.emplace_back("critic_steps must be >= 1");
    }
    if (c.base_width < 1 || c.max_width < c.base_width || c.recognizer_width < 1 || c.recognizer_hidden < 1 ||
        c.feature_dim < 1 || c.identity_dim < 1) {
        v.emplace_back("network widths must be positive and max_width >= base_width");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) {
        v.emplace_back("dropout must lie in [0, 1)");
    }
    if (c.embedder_steps < 0) {
        v.emplace_back("embedder_steps must be non-negative");
    }
    if (c.checkpoint_every < 0) {
        v.emplace_back("checkpoint_every must be non-negative (0 disables periodic checkpoints)");
    }
    if (c.fold_count < 2) {
        v.emplace_back("fold_count must be >= 2");
    }
    if (!variant_spec(c.variant)) {
        v.push_back("unknown variant '" + c.variant + "'");
    }
    return v;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ExperimentConfig::parse(ss.str());
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write config file " + path.string());
    }
    out << cfg.serialize();
}

}  // namespace fesr
