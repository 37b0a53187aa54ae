#include <fstream>
#include <sstream>

#include <json.hpp>

#include "phenoseq/model.hpp"

namespace phenoseq {

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
    json data = json::array();
    for (double v : t.values()) data.push_back(v);
    return {{"shape", t.shape()}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const json& j, const std::string& name) {
    Shape shape = j.at("shape").get<Shape>();
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    if (shape_volume(shape) != data.size()) {
        throw ValidationError("checkpoint tensor '" + name + "' has " + std::to_string(data.size()) +
                              " values for shape " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), std::move(data));
}

json config_to_json(const ModelConfig& c) {
    return {{"extractor",
             {{"channels", c.extractor.channels},
              {"kernel_size", c.extractor.kernel_size},
              {"pool", c.extractor.pool},
              {"input_channels", c.extractor.input_channels}}},
            {"image_size", c.image_size},
            {"hidden_units", c.hidden_units},
            {"lstm_hidden", c.lstm_hidden},
            {"classes", c.classes}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    const json& e = j.at("extractor");
    c.extractor.channels = e.at("channels").get<std::vector<std::size_t>>();
    c.extractor.kernel_size = e.at("kernel_size").get<std::size_t>();
    c.extractor.pool = e.at("pool").get<std::size_t>();
    c.extractor.input_channels = e.at("input_channels").get<std::size_t>();
    c.image_size = j.at("image_size").get<std::size_t>();
    c.hidden_units = j.at("hidden_units").get<std::size_t>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.validate();
    return c;
}

template <typename Model>
Checkpoint checkpoint_of(Model& model, const char* kind, std::uint64_t seed, std::size_t epoch) {
    Checkpoint ck;
    ck.kind = kind;
    ck.config = model.config;
    ck.seed = seed;
    ck.epoch = epoch;
    for (auto& [name, tensor] : model.parameters(true)) ck.tensors.emplace(name, *tensor);
    ck.tensors.emplace("norm.shift", model.norm.shift);
    ck.tensors.emplace("norm.scale", model.norm.scale);
    return ck;
}

template <typename Model>
Model restore(const Checkpoint& ck, const char* kind) {
    if (ck.kind != kind) {
        throw ValidationError("checkpoint holds a '" + ck.kind + "' model, expected '" + kind + "'");
    }
    RngStream rng(0, 0);
    Model model = Model::init(ck.config, rng, rng);
    ParameterList params = model.parameters(true);
    params.emplace_back("norm.shift", &model.norm.shift);
    params.emplace_back("norm.scale", &model.norm.scale);
    if (params.size() != ck.tensors.size()) {
        throw ValidationError("checkpoint has " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                              std::to_string(params.size()));
    }
    for (auto& [name, target] : params) {
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw ValidationError("checkpoint is missing tensor '" + name + "'");
        if (!it->second.same_shape(*target)) {
            throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                             ", model expects " + shape_to_string(target->shape()));
        }
        *target = it->second;
    }
    return model;
}

}  // namespace

Checkpoint make_checkpoint(const CnnClassifier& model, std::uint64_t seed, std::size_t epoch) {
    CnnClassifier copy = model;
    return checkpoint_of(copy, "cnn", seed, epoch);
}

Checkpoint make_checkpoint(const CnnLstmModel& model, std::uint64_t seed, std::size_t epoch) {
    CnnLstmModel copy = model;
    return checkpoint_of(copy, "cnn-lstm", seed, epoch);
}

CnnClassifier classifier_from_checkpoint(const Checkpoint& checkpoint) {
    return restore<CnnClassifier>(checkpoint, "cnn");
}

CnnLstmModel cnn_lstm_from_checkpoint(const Checkpoint& checkpoint) {
    return restore<CnnLstmModel>(checkpoint, "cnn-lstm");
}

std::string checkpoint_to_json(const Checkpoint& checkpoint) {
    json tensors = json::object();
    for (const auto& [name, t] : checkpoint.tensors) tensors[name] = tensor_to_json(t);
    json j = {{"format", "phenoseq-checkpoint"},
              {"version", 1},
              {"kind", checkpoint.kind},
              {"seed", checkpoint.seed},
              {"epoch", checkpoint.epoch},
              {"config", config_to_json(checkpoint.config)},
              {"tensors", std::move(tensors)}};
    return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != "phenoseq-checkpoint") {
            throw ValidationError("not a phenoseq checkpoint");
        }
        if (j.at("version").get<int>() != 1) throw ValidationError("unsupported checkpoint version");
        Checkpoint ck;
        ck.kind = j.at("kind").get<std::string>();
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.epoch = j.at("epoch").get<std::size_t>();
        ck.config = config_from_json(j.at("config"));
        for (const auto& [name, t] : j.at("tensors").items()) ck.tensors.emplace(name, tensor_from_json(t, name));
        return ck;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(checkpoint) << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_json(buf.str());
}

}  // namespace phenoseq
