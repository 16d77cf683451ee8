#include "sdic/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sdic/errors.hpp"

namespace sdic {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

int64_t parse_int(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
}

uint64_t parse_uint(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

double parse_double(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) {
        throw ConfigError("config key '" + key + "': expected a finite real, got '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + s + "'");
}

std::vector<int64_t> parse_list(const std::string& key, const std::string& raw) {
    std::vector<int64_t> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_list(const std::vector<int64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(v[i]);
    }
    return out;
}

struct Binding {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

using Section = std::vector<std::pair<std::string, Binding>>;

Binding bind_key(const std::string& key, int64_t& ref) {
    return {[&ref, key](const std::string& s) { ref = parse_int(key, s); }, [&ref] { return std::to_string(ref); }};
}
Binding bind_key(const std::string& key, uint64_t& ref) {
    return {[&ref, key](const std::string& s) { ref = parse_uint(key, s); }, [&ref] { return std::to_string(ref); }};
}
Binding bind_key(const std::string& key, double& ref) {
    return {[&ref, key](const std::string& s) { ref = parse_double(key, s); }, [&ref] { return fmt_double(ref); }};
}
Binding bind_key(const std::string& key, bool& ref) {
    return {[&ref, key](const std::string& s) { ref = parse_bool(key, s); },
            [&ref] { return std::string(ref ? "true" : "false"); }};
}
Binding bind_key(const std::string& key, std::vector<int64_t>& ref) {
    return {[&ref, key](const std::string& s) { ref = parse_list(key, s); }, [&ref] { return fmt_list(ref); }};
}

// Section name -> ordered key bindings. Order fixes the to_ini() layout.
std::vector<std::pair<std::string, Section>> bindings(RunConfig& c) {
    auto& m = c.model;
    auto& t = c.train;
    auto& d = c.data;
    auto& l = c.loss;
    Section model{
        {"image_size", bind_key("image_size", m.image_size)},
        {"style_rows", bind_key("style_rows", m.style_rows)},
        {"style_dim", bind_key("style_dim", m.style_dim)},
        {"injection_layer", bind_key("injection_layer", m.injection_layer)},
        {"generator_channels", bind_key("generator_channels", m.generator_channels)},
        {"style_gain", bind_key("style_gain", m.style_gain)},
        {"output_gain", bind_key("output_gain", m.output_gain)},
        {"encoder_channels", bind_key("encoder_channels", m.encoder_channels)},
        {"branch_channels", bind_key("branch_channels", m.branch_channels)},
        {"context_channels", bind_key("context_channels", m.context_channels)},
        {"volume_channels", bind_key("volume_channels", m.volume_channels)},
        {"affine_hidden", bind_key("affine_hidden", m.affine_hidden)},
        {"map_embed_channels", bind_key("map_embed_channels", m.map_embed_channels)},
        {"feature_channels", bind_key("feature_channels", m.feature_channels)},
        {"identity_init", bind_key("identity_init", m.identity_init)},
        {"edit_base",
         Binding{[&m](const std::string& s) { m.edit_base = parse_edit_base(trim(s)); }, [&m] { return to_string(m.edit_base); }}},
        {"generator_seed", bind_key("generator_seed", m.generator_seed)},
        {"encoder_seed", bind_key("encoder_seed", m.encoder_seed)},
        {"sdic_seed", bind_key("sdic_seed", m.sdic_seed)},
        {"feature_seed", bind_key("feature_seed", m.feature_seed)},
    };
    Section train{
        {"seed", bind_key("seed", t.seed)},
        {"steps", bind_key("steps", t.steps)},
        {"batch_size", bind_key("batch_size", t.batch_size)},
        {"learning_rate", bind_key("learning_rate", t.learning_rate)},
        {"weight_decay", bind_key("weight_decay", t.weight_decay)},
        {"warmup_steps", bind_key("warmup_steps", t.warmup_steps)},
        {"variant",
         Binding{[&t](const std::string& s) { t.variant = parse_variant(trim(s)); }, [&t] { return to_string(t.variant); }}},
        {"log_every", bind_key("log_every", t.log_every)},
        {"pretrain_steps", bind_key("pretrain_steps", t.pretrain_steps)},
        {"pretrain_batch_size", bind_key("pretrain_batch_size", t.pretrain_batch_size)},
        {"pretrain_learning_rate", bind_key("pretrain_learning_rate", t.pretrain_learning_rate)},
    };
    Section data{
        {"seed", bind_key("seed", d.seed)},
        {"train_count", bind_key("train_count", d.train_count)},
        {"heldout_count", bind_key("heldout_count", d.heldout_count)},
        {"min_sprites", bind_key("min_sprites", d.min_sprites)},
        {"max_sprites", bind_key("max_sprites", d.max_sprites)},
        {"min_alpha", bind_key("min_alpha", d.min_alpha)},
        {"max_alpha", bind_key("max_alpha", d.max_alpha)},
        {"min_sprite_size", bind_key("min_sprite_size", d.min_sprite_size)},
        {"max_sprite_size", bind_key("max_sprite_size", d.max_sprite_size)},
    };
    Section loss{
        {"lambda_lpips", bind_key("lambda_lpips", l.lpips)},
        {"lambda_id", bind_key("lambda_id", l.id)},
        {"lambda_edit", bind_key("lambda_edit", l.edit)},
    };
    return {{"model", std::move(model)}, {"train", std::move(train)}, {"data", std::move(data)}, {"loss", std::move(loss)}};
}

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int64_t log2_exact(int64_t v) {
    int64_t n = 0;
    while ((int64_t{1} << n) < v) ++n;
    return n;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

void require_positive(const std::vector<int64_t>& v, const std::string& name) {
    for (auto x : v) require(x > 0, name + ": channel counts must be positive");
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::kFull: return "full";
        case Variant::kNoAttention: return "no-att";
        case Variant::kNoSpatialContext: return "no-sc";
    }
    return "full";
}

Variant parse_variant(std::string_view s) {
    if (s == "full") return Variant::kFull;
    if (s == "no-att") return Variant::kNoAttention;
    if (s == "no-sc") return Variant::kNoSpatialContext;
    throw ConfigError("unknown variant '" + std::string(s) + "' (expected full, no-att or no-sc)");
}

std::string to_string(EditBase b) { return b == EditBase::kEnhanced ? "enhanced" : "initial"; }

EditBase parse_edit_base(std::string_view s) {
    if (s == "enhanced") return EditBase::kEnhanced;
    if (s == "initial") return EditBase::kInitial;
    throw ConfigError("unknown edit_base '" + std::string(s) + "' (expected enhanced or initial)");
}

int64_t ModelConfig::generator_blocks() const { return log2_exact(image_size) - 1; }

int64_t ModelConfig::encoder_layers() const { return log2_exact(image_size) - 1; }

int64_t ModelConfig::block_resolution(int64_t layer) const {
    return layer == 0 ? 4 : (int64_t{4} << layer);
}

int64_t ModelConfig::block_channels(int64_t layer) const {
    return generator_channels.at(static_cast<std::size_t>(layer) + 1);
}

int64_t ModelConfig::style_row_for_block(int64_t block) const {
    return std::min<int64_t>(block + 1, style_rows - 1);
}

void ModelConfig::validate() const {
    require(is_power_of_two(image_size) && image_size >= 16, "model.image_size must be a power of two >= 16");
    require(style_rows >= 2, "model.style_rows must be >= 2");
    require(style_dim >= 1, "model.style_dim must be >= 1");
    require(static_cast<int64_t>(generator_channels.size()) == generator_blocks() + 1,
            "model.generator_channels needs " + std::to_string(generator_blocks() + 1) + " entries for image_size " +
                std::to_string(image_size));
    require(injection_layer >= 0 && injection_layer < generator_blocks(),
            "model.injection_layer must lie in [0, " + std::to_string(generator_blocks() - 1) + "]");
    require(static_cast<int64_t>(encoder_channels.size()) == encoder_layers(),
            "model.encoder_channels needs " + std::to_string(encoder_layers()) + " entries for image_size " +
                std::to_string(image_size));
    require(branch_channels.size() == 5, "model.branch_channels needs 5 entries");
    require(context_channels > 0, "model.context_channels must be positive");
    require((2 * context_channels) % 8 == 0, "model.context_channels: 2C must be divisible by 8");
    require(volume_channels.size() == 3, "model.volume_channels needs 3 entries");
    require(affine_hidden > 0, "model.affine_hidden must be positive");
    require(map_embed_channels.size() == 3, "model.map_embed_channels needs 3 entries");
    require(feature_channels.size() == 4, "model.feature_channels needs 4 entries");
    require(style_gain > 0 && output_gain > 0, "model gains must be positive");
    require_positive(generator_channels, "model.generator_channels");
    require_positive(encoder_channels, "model.encoder_channels");
    require_positive(branch_channels, "model.branch_channels");
    require_positive(volume_channels, "model.volume_channels");
    require_positive(map_embed_channels, "model.map_embed_channels");
    require_positive(feature_channels, "model.feature_channels");
    // f_c2 reaches the latent-map grid with at most three stride-2 layers.
    const int64_t downs = log2_exact(image_size / block_resolution(injection_layer));
    require(downs <= 3, "model.injection_layer too shallow for the discrepancy embedding (needs <= 3 downsamplings)");
}

void TrainConfig::validate() const {
    require(steps >= 1, "train.steps must be positive");
    require(batch_size >= 1, "train.batch_size must be >= 1");
    require(learning_rate > 0, "train.learning_rate must be positive");
    require(weight_decay >= 0, "train.weight_decay must be >= 0");
    require(warmup_steps >= 0, "train.warmup_steps must be >= 0");
    require(log_every >= 1, "train.log_every must be >= 1");
    require(pretrain_steps >= 1, "train.pretrain_steps must be positive");
    require(pretrain_batch_size >= 1, "train.pretrain_batch_size must be >= 1");
    require(pretrain_learning_rate > 0, "train.pretrain_learning_rate must be positive");
}

void DataConfig::validate() const {
    require(train_count >= 1 && heldout_count >= 1, "data counts must be positive");
    require(min_sprites >= 1 && max_sprites >= min_sprites, "data sprite counts must satisfy 1 <= min <= max");
    require(min_alpha >= 0.5 && max_alpha <= 1.0 && min_alpha <= max_alpha,
            "data alpha range must lie within [0.5, 1.0]");
    require(min_sprite_size >= 1 && max_sprite_size >= min_sprite_size, "data sprite sizes must satisfy 1 <= min <= max");
}

void LossWeights::validate() const {
    require(lpips >= 0 && id >= 0 && edit >= 0, "loss weights must be non-negative");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    data.validate();
    loss.validate();
}

RunConfig RunConfig::parse(std::string_view ini_text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(ini_text)};
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }

    RunConfig cfg;
    auto table = bindings(cfg);
    for (const auto& [section, entries] : tree) {
        if (entries.empty() && !entries.data().empty()) {
            throw ConfigError("config key '" + section + "' appears outside any section");
        }
        auto sec = std::find_if(table.begin(), table.end(), [&](const auto& s) { return s.first == section; });
        if (sec == table.end()) throw ConfigError("unknown config section [" + section + "]");
        for (const auto& [key, value] : entries) {
            auto it = std::find_if(sec->second.begin(), sec->second.end(), [&](const auto& b) { return b.first == key; });
            if (it == sec->second.end()) throw ConfigError("unknown config key '" + key + "' in [" + section + "]");
            it->second.set(value.get_value<std::string>());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::to_ini() const {
    RunConfig copy = *this;
    std::string out;
    for (const auto& [section, entries] : bindings(copy)) {
        if (!out.empty()) out += "\n";
        out += "[" + section + "]\n";
        for (const auto& [key, b] : entries) out += key + " = " + b.get() + "\n";
    }
    return out;
}

RunConfig reduced_config() {
    RunConfig c;
    auto& m = c.model;
    m.image_size = 16;
    m.style_rows = 2;
    m.style_dim = 8;
    m.injection_layer = 1;
    m.generator_channels = {8, 8, 6, 4};
    m.encoder_channels = {4, 6, 8};
    m.branch_channels = {4, 4, 6, 6, 8};
    m.context_channels = 4;
    m.volume_channels = {2, 3, 4};
    m.affine_hidden = 3;
    m.map_embed_channels = {4, 4, 4};
    m.feature_channels = {4, 4, 6, 6};
    c.train.steps = 20;
    c.train.batch_size = 2;
    c.train.pretrain_steps = 20;
    c.train.pretrain_batch_size = 4;
    c.train.log_every = 5;
    c.train.warmup_steps = 5;
    c.data.train_count = 32;
    c.data.heldout_count = 8;
    c.data.min_sprite_size = 2;
    c.data.max_sprite_size = 6;
    c.validate();
    return c;
}

}  // namespace sdic
