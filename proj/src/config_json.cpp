#include "voxalign/config_json.hpp"

#include <string>

#include "voxalign/error.hpp"

namespace voxalign {
namespace {

[[noreturn]] void unknown_key(const char* section, const std::string& key) {
    throw Error(ErrorCode::InvalidConfig, std::string("unknown ") + section + " key '" + key + "'");
}

void require_object(const Json& j, const char* section) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, std::string(section) + " config must be a JSON object");
}

}  // namespace

Json to_json(const TrainConfig& c) {
    Json j;
    j["batch_size"] = c.batch_size;
    j["steps"] = c.steps;
    j["learning_rate"] = c.learning_rate;
    j["lambda"] = c.lambda;
    j["temperature"] = c.temperature;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon"] = c.epsilon;
    j["seed"] = c.seed;
    j["eval_every"] = c.eval_every;
    j["kd_enabled"] = c.kd_enabled;
    j["hidden_dims"] = c.hidden_dims;
    j["activation"] = to_string(c.activation);
    j["window_len_s"] = c.windows.window_len_s;
    j["overlap_s"] = c.windows.overlap_s;
    return j;
}

void apply_json(const Json& j, TrainConfig& c) {
    require_object(j, "train");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "steps") c.steps = v.get<std::size_t>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "lambda") c.lambda = v.get<double>();
            else if (key == "temperature") c.temperature = v.get<double>();
            else if (key == "beta1") c.beta1 = v.get<double>();
            else if (key == "beta2") c.beta2 = v.get<double>();
            else if (key == "epsilon") c.epsilon = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
            else if (key == "kd_enabled") c.kd_enabled = v.get<bool>();
            else if (key == "hidden_dims") c.hidden_dims = v.get<std::vector<std::size_t>>();
            else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
            else if (key == "window_len_s") c.windows.window_len_s = v.get<double>();
            else if (key == "overlap_s") c.windows.overlap_s = v.get<double>();
            else unknown_key("train", key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
    }
}

Json to_json(const EvalConfig& c) {
    Json j;
    j["threshold"] = c.threshold;
    j["split"] = to_string(c.split);
    j["window_len_s"] = c.windows.window_len_s;
    j["overlap_s"] = c.windows.overlap_s;
    j["ks"] = c.ks;
    return j;
}

void apply_json(const Json& j, EvalConfig& c) {
    require_object(j, "eval");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "threshold") c.threshold = v.get<double>();
            else if (key == "split") c.split = parse_split(v.get<std::string>());
            else if (key == "window_len_s") c.windows.window_len_s = v.get<double>();
            else if (key == "overlap_s") c.windows.overlap_s = v.get<double>();
            else if (key == "ks") c.ks = v.get<std::vector<std::size_t>>();
            else unknown_key("eval", key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("eval config: ") + e.what());
    }
}

Json to_json(const LossBreakdown& l) {
    return Json{{"con_audio_to_ct", l.con_audio_to_ct}, {"con_ct_to_audio", l.con_ct_to_audio},
                {"con_symmetric", l.con_symmetric},     {"distill", l.distill},
                {"lambda", l.lambda},                   {"total", l.total}};
}

Json to_json(const TrainReport& r) {
    Json j;
    j["config"] = to_json(r.config);
    j["steps_run"] = r.loss_curve.size();
    if (!r.loss_curve.empty()) {
        j["initial_loss"] = to_json(r.loss_curve.front());
        j["final_loss"] = to_json(r.loss_curve.back());
    }
    Json snaps = Json::array();
    for (const auto& s : r.snapshots) snaps.push_back(Json{{"step", s.step}, {"held_out", to_json(s.held_out)}});
    j["snapshots"] = std::move(snaps);
    j["frozen_towers"] = {{"vision_crc32_before", r.vision_fingerprint_before},
                          {"vision_crc32_after", r.vision_fingerprint_after},
                          {"text_crc32_before", r.text_fingerprint_before},
                          {"text_crc32_after", r.text_fingerprint_after}};
    j["checkpoint"] = r.checkpoint_path ? r.checkpoint_path->filename().string() : std::string();
    j["loss_curve"] = "loss_curve.csv";
    return j;
}

Json to_json(const MetricsReport& r) {
    Json j;
    j["query_path"] = r.query_path;
    j["threshold"] = r.threshold;
    j["label_count"] = r.label_count;
    j["case_count"] = r.case_count;
    j["mean"] = {{"auroc", r.mean_auroc},
                 {"f1", r.mean_f1},
                 {"accuracy", r.mean_accuracy},
                 {"precision", r.mean_precision},
                 {"recall", r.mean_recall},
                 {"weighted_f1", r.weighted_f1}};
    j["auroc_label_count"] = r.auroc_label_count;
    j["excluded_from_auroc"] = r.excluded_from_auroc;
    Json labels = Json::array();
    for (const auto& l : r.per_label) {
        Json e;
        e["label"] = l.label;
        e["support"] = l.support;
        e["auroc"] = l.auroc ? Json(*l.auroc) : Json(nullptr);
        e["f1"] = l.confusion.f1;
        e["accuracy"] = l.confusion.accuracy;
        e["precision"] = l.confusion.precision;
        e["recall"] = l.confusion.recall;
        e["confusion"] = {{"tp", l.confusion.tp}, {"fp", l.confusion.fp}, {"fn", l.confusion.fn}, {"tn", l.confusion.tn}};
        labels.push_back(std::move(e));
    }
    j["per_label"] = std::move(labels);
    return j;
}

Json to_json(const RetrievalReport& r) {
    Json j;
    j["query_path"] = r.query_path;
    j["pool_size"] = r.pool_size;
    j["query_count"] = r.query_count;
    Json recall = Json::object();
    for (std::size_t i = 0; i < r.ks.size(); ++i) recall["recall@" + std::to_string(r.ks[i])] = r.recall[i];
    j["recall"] = std::move(recall);
    return j;
}

}  // namespace voxalign
