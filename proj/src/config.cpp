#include "rvjscc/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rvjscc {

using json = nlohmann::ordered_json;

namespace {

// Field walkers shared by parsing and serialization so both see one field list.
class Reader {
public:
    Reader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {}

    template <class T>
    void operator()(const char* key, T& out) {
        known_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            it->get_to(out);
        } catch (const json::exception& e) {
            throw std::invalid_argument("config: bad value for '" + path_ + key + "': " + e.what());
        }
    }

    template <class F>
    void section(const char* key, F&& fill) {
        known_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) return;
        if (!it->is_object()) throw std::invalid_argument("config: '" + path_ + key + "' must be an object");
        Reader sub(*it, path_ + key + ".");
        fill(sub);
        sub.finish();
    }

    void finish() const {
        for (const auto& item : doc_.items()) {
            if (!known_.count(item.key())) throw std::invalid_argument("config: unknown key '" + path_ + item.key() + "'");
        }
    }

private:
    const json& doc_;
    std::string path_;
    std::set<std::string> known_;
};

class Writer {
public:
    explicit Writer(json& doc) : doc_(doc) {}

    template <class T>
    void operator()(const char* key, const T& value) {
        doc_[key] = value;
    }

    template <class F>
    void section(const char* key, F&& fill) {
        json sub = json::object();
        Writer w(sub);
        fill(w);
        doc_[key] = std::move(sub);
    }

private:
    json& doc_;
};

template <class V>
void visit(V& v, ExperimentConfig& c) {
    v("version", c.version);
    v("preset", c.preset);
    v("variant", c.variant);
    v.section("ofdm", [&](auto& s) {
        s("m_key", c.ofdm.m_key);
        s("m_interp", c.ofdm.m_interp);
        s("n_p", c.ofdm.n_p);
        s("n_s", c.ofdm.n_s);
        s("n_c", c.ofdm.n_c);
        s("l_cp", c.ofdm.l_cp);
        s("power", c.ofdm.power);
        s("pilot_seed", c.ofdm.pilot_seed);
    });
    v.section("channel", [&](auto& s) {
        s("num_paths", c.channel.num_paths);
        s("gamma", c.channel.gamma);
    });
    v.section("codec", [&](auto& s) {
        s("feature_channels", c.codec.feature_channels);
        s.section("scale_space", [&](auto& ss) {
            ss("levels", c.codec.scale_space.levels);
            ss("base_sigma", c.codec.scale_space.base_sigma);
            ss("kernel_radius", c.codec.scale_space.kernel_radius);
        });
        s("decoded_channels", c.codec.decoded_channels);
        s("latent_channels_key", c.codec.latent_channels_key);
        s("latent_channels_interp", c.codec.latent_channels_interp);
        s("width", c.codec.width);
        s("downsample_stages", c.codec.downsample_stages);
        s("ssf_width", c.codec.ssf_width);
        s("context_width", c.codec.context_width);
        s("denoiser_width", c.codec.denoiser_width);
        s("af_hidden", c.codec.af_hidden);
    });
    v.section("train", [&](auto& s) {
        s("lambda", c.train.lambda);
        s("init_lr", c.train.init_lr);
        s("lr_factor", c.train.lr_factor);
        s("patience", c.train.patience);
        s("stop_patience", c.train.stop_patience);
        s("batch_size", c.train.batch_size);
        s("snr_lo_db", c.train.snr_lo_db);
        s("snr_hi_db", c.train.snr_hi_db);
        s("epochs_max", c.train.epochs_max);
        s("steps_per_epoch", c.train.steps_per_epoch);
        s("seed", c.train.seed);
        s("eval_snrs_db", c.train.eval_snrs_db);
    });
    v.section("data", [&](auto& s) {
        s("source", c.data.source);
        s("frame_size", c.data.frame_size);
        s("gop_len", c.data.gop_len);
        s("seed", c.data.seed);
        s("train_sequences", c.data.train_sequences);
        s("val_sequences", c.data.val_sequences);
        s("test_sequences", c.data.test_sequences);
        s("sequence_length", c.data.sequence_length);
        s("frame_stride", c.data.frame_stride);
        s("crop_size", c.data.crop_size);
    });
    v.section("ablation", [&](auto& s) {
        s("checkpoint_dir", c.ablation.checkpoint_dir);
        s("variants", c.ablation.variants);
    });
}

}  // namespace

void ExperimentConfig::validate() const {
    if (version != kConfigVersion) {
        throw std::invalid_argument("config: unsupported version " + std::to_string(version));
    }
    Variant::from_tag(variant);
    for (const auto& tag : ablation.variants) Variant::from_tag(tag);
    make_pdp(channel.num_paths, channel.gamma);
    system().validate();
    if (train.batch_size < 1 || train.epochs_max < 1 || train.steps_per_epoch < 1) {
        throw std::invalid_argument("config: batch_size, epochs_max and steps_per_epoch must be >= 1");
    }
    if (train.init_lr <= 0 || train.lr_factor <= 0 || train.lr_factor > 1) {
        throw std::invalid_argument("config: need init_lr > 0 and lr_factor in (0, 1]");
    }
    if (train.patience < 1 || train.stop_patience < 1) throw std::invalid_argument("config: patience values must be >= 1");
    if (train.snr_hi_db < train.snr_lo_db) throw std::invalid_argument("config: snr_hi_db < snr_lo_db");
    if (train.eval_snrs_db.empty()) throw std::invalid_argument("config: eval_snrs_db is empty");
    if (train.lambda < 0) throw std::invalid_argument("config: lambda must be >= 0");
    if (data.sequence_length < data.gop_len + 1) {
        throw std::invalid_argument("config: sequence_length must hold the bootstrap frame and one GoP");
    }
    if (data.train_sequences < 1 || data.val_sequences < 1 || data.test_sequences < 1) {
        throw std::invalid_argument("config: every split needs at least one sequence");
    }
    if (data.frame_stride < 1 || data.crop_size < 0) throw std::invalid_argument("config: bad frame_stride or crop_size");
}

SystemConfig ExperimentConfig::system() const {
    SystemConfig sys;
    sys.ofdm = ofdm;
    sys.codec = codec;
    sys.frame_h = data.frame_size;
    sys.frame_w = data.frame_size;
    sys.gop_len = data.gop_len;
    sys.variant = Variant::from_tag(variant);
    return sys;
}

double ExperimentConfig::effective_lambda() const {
    return Variant::from_tag(variant).denoiser ? train.lambda : 0.0;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"paper", "desk"};
    return names;
}

ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig c;
    c.preset = name;
    if (name == "paper") return c;
    if (name != "desk") throw std::invalid_argument("config: unknown preset '" + name + "'");

    c.ofdm.n_s = 4;
    c.ofdm.n_c = 32;
    c.ofdm.l_cp = 4;
    c.channel.num_paths = 4;
    c.codec.downsample_stages = 2;
    c.codec.latent_channels_key = 24;
    c.codec.latent_channels_interp = 8;
    c.codec.ssf_width = 16;
    c.codec.context_width = 16;
    c.codec.denoiser_width = 16;
    c.codec.af_hidden = 8;
    c.train.init_lr = 1e-3;
    c.train.batch_size = 8;
    c.train.epochs_max = 30;
    c.train.steps_per_epoch = 40;
    c.data.frame_size = 32;
    c.data.train_sequences = 48;
    c.data.val_sequences = 8;
    c.data.test_sequences = 8;
    c.data.sequence_length = 17;
    c.ablation.checkpoint_dir = "runs/desk";
    return c;
}

ExperimentConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw std::invalid_argument("config: top level must be an object");
    std::string preset = "paper";
    if (auto it = doc.find("preset"); it != doc.end()) {
        if (!it->is_string()) throw std::invalid_argument("config: 'preset' must be a string");
        preset = it->get<std::string>();
    }
    ExperimentConfig cfg = preset_config(preset);
    Reader reader(doc, "");
    visit(reader, cfg);
    reader.finish();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json doc = json::object();
    Writer writer(doc);
    ExperimentConfig copy = cfg;
    visit(writer, copy);
    return doc.dump(2) + "\n";
}

void write_config(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path);
    out << serialize_config(cfg);
}

uint64_t resolve_seed(std::optional<uint64_t> flag, uint64_t config_seed) {
    if (flag) return *flag;
    if (const char* env = std::getenv("RVJSCC_SEED"); env != nullptr && *env != '\0') {
        try {
            size_t used = 0;
            const auto value = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
            return value;
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string("RVJSCC_SEED is not an unsigned integer: ") + env);
        }
    }
    return config_seed;
}

JsccSystem build_system(const ExperimentConfig& cfg) {
    torch::manual_seed(cfg.train.seed);
    return JsccSystem(cfg.system());
}

LoadedModel load_model(const std::string& checkpoint_path) {
    auto header = read_checkpoint_header(checkpoint_path);
    LoadedModel loaded;
    loaded.config = parse_config(header.config_json);
    loaded.model = build_system(loaded.config);
    load_checkpoint_parameters(checkpoint_path, loaded.model);
    return loaded;
}

DatasetSplit make_datasets(const DataConfig& data) {
    DatasetSplit split;
    if (data.source == "synthetic") {
        const int length = usable_frames(data.sequence_length, data.gop_len);
        auto fill = [&](std::vector<VideoSequence>& out, int count, uint64_t offset) {
            for (int i = 0; i < count; ++i) {
                out.push_back(synth_video(data.seed * 1000003ULL + offset + static_cast<uint64_t>(i), length,
                                          data.frame_size));
            }
        };
        fill(split.train, data.train_sequences, 0);
        fill(split.val, data.val_sequences, 100000);
        fill(split.test, data.test_sequences, 200000);
        return split;
    }
    LoadOptions opts;
    opts.frame_stride = data.frame_stride;
    opts.crop_size = data.crop_size;
    auto all = load_dataset(data.source, data.frame_size, data.gop_len, opts);
    const auto held = static_cast<size_t>(data.val_sequences + data.test_sequences);
    if (all.size() <= held) {
        throw std::runtime_error("dataset " + data.source + " has " + std::to_string(all.size()) +
                                 " sequences; need more than val_sequences + test_sequences = " + std::to_string(held));
    }
    const auto n_train = all.size() - held;
    split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                     all.begin() + static_cast<std::ptrdiff_t>(n_train + static_cast<size_t>(data.val_sequences)));
    split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + static_cast<size_t>(data.val_sequences)),
                      all.end());
    return split;
}

}  // namespace rvjscc
