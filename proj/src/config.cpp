#include "kalm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "kalm/errors.hpp"

namespace kalm {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("config key '" + std::string(key) + "': cannot parse '" +
                          std::string(value) + "'");
    }
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw ConfigError("config key '" + key + "': " + why);
    };
    if (d_model == 0) fail("d_model", "must be positive");
    if (heads == 0) fail("heads", "must be positive");
    if (d_model % heads != 0) fail("heads", "d_model must be divisible by heads");
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha", "must lie in [0, 1]");
    if (!(lambda >= 0.0)) fail("lambda", "must be >= 0");
    if (!(beta >= 0.0)) fail("beta", "must be >= 0");
    if (top_k == 0) fail("top_k", "must be >= 1");
    if (!(tau > 0.0)) fail("tau", "must be > 0");
    if (!(learning_rate >= 0.0)) fail("learning_rate", "must be >= 0");
    if (batch_size == 0) fail("batch_size", "must be >= 1");
    if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0)) fail("noise_ratio", "must lie in [0, 1]");
    if (max_chain_edges == 0) fail("max_chain_edges", "must be >= 1");
    if (!(position_scale >= 0.0)) fail("position_scale", "must be >= 0");
    if (!(encoder_lr_scale >= 0.0)) fail("encoder_lr_scale", "must be >= 0");
    if (!(encoder_init_scale > 0.0)) fail("encoder_init_scale", "must be > 0");
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
    using u = std::size_t;
    if (key == "d_model") cfg.d_model = parse_number<u>(key, value);
    else if (key == "heads") cfg.heads = parse_number<u>(key, value);
    else if (key == "alpha") cfg.alpha = parse_number<double>(key, value);
    else if (key == "lambda") cfg.lambda = parse_number<double>(key, value);
    else if (key == "beta") cfg.beta = parse_number<double>(key, value);
    else if (key == "top_k") cfg.top_k = parse_number<u>(key, value);
    else if (key == "tau") cfg.tau = parse_number<double>(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
    else if (key == "epochs") cfg.epochs = parse_number<u>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<u>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "noise_ratio") cfg.noise_ratio = parse_number<double>(key, value);
    else if (key == "max_chain_edges") cfg.max_chain_edges = parse_number<u>(key, value);
    else if (key == "position_scale") cfg.position_scale = parse_number<double>(key, value);
    else if (key == "encoder_lr_scale") cfg.encoder_lr_scale = parse_number<double>(key, value);
    else if (key == "encoder_init_scale") cfg.encoder_init_scale = parse_number<double>(key, value);
    else if (key == "optimizer") {
        if (value == "adam") cfg.optimizer = Optimizer::adam;
        else if (value == "sgd") cfg.optimizer = Optimizer::sgd;
        else throw ConfigError("config key 'optimizer': expected adam or sgd, got '" +
                               std::string(value) + "'");
    } else {
        throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
}

TrainConfig parse_config(std::string_view text) {
    TrainConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            set_config_value(cfg, key, value);
            TrainConfig probe = cfg;
            // Divisibility is only meaningful once both keys are final.
            if (key == "d_model" || key == "heads") probe.heads = 1;
            probe.validate();
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
    return nlohmann::json{
        {"d_model", cfg.d_model},
        {"heads", cfg.heads},
        {"alpha", cfg.alpha},
        {"lambda", cfg.lambda},
        {"beta", cfg.beta},
        {"top_k", cfg.top_k},
        {"tau", cfg.tau},
        {"learning_rate", cfg.learning_rate},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"seed", cfg.seed},
        {"noise_ratio", cfg.noise_ratio},
        {"max_chain_edges", cfg.max_chain_edges},
        {"optimizer", cfg.optimizer == Optimizer::adam ? "adam" : "sgd"},
        {"position_scale", cfg.position_scale},
        {"encoder_lr_scale", cfg.encoder_lr_scale},
        {"encoder_init_scale", cfg.encoder_init_scale},
    };
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    try {
        cfg.d_model = j.at("d_model").get<std::size_t>();
        cfg.heads = j.at("heads").get<std::size_t>();
        cfg.alpha = j.at("alpha").get<double>();
        cfg.lambda = j.at("lambda").get<double>();
        cfg.beta = j.at("beta").get<double>();
        cfg.top_k = j.at("top_k").get<std::size_t>();
        cfg.tau = j.at("tau").get<double>();
        cfg.learning_rate = j.at("learning_rate").get<double>();
        cfg.epochs = j.at("epochs").get<std::size_t>();
        cfg.batch_size = j.at("batch_size").get<std::size_t>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.noise_ratio = j.at("noise_ratio").get<double>();
        cfg.max_chain_edges = j.at("max_chain_edges").get<std::size_t>();
        const auto opt = j.at("optimizer").get<std::string>();
        if (opt != "adam" && opt != "sgd") throw ConfigError("unknown optimizer '" + opt + "'");
        cfg.optimizer = opt == "adam" ? Optimizer::adam : Optimizer::sgd;
        cfg.position_scale = j.at("position_scale").get<double>();
        cfg.encoder_lr_scale = j.at("encoder_lr_scale").get<double>();
        cfg.encoder_init_scale = j.at("encoder_init_scale").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed config object: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace kalm
