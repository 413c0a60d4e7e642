// Offline helpers: size reports, desk-scale training, focal-length
// calibration, and local stand-ins for the detector and TTS services.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sightline/distance.hpp"
#include "sightline/error.hpp"
#include "sightline/finetune.hpp"
#include "sightline/perception.hpp"
#include "sightline/quantization.hpp"

using namespace sightline;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, fmt::format("cannot open '{}'", path));
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::SchemaViolation, fmt::format("'{}' is not valid JSON", path));
  return j;
}

int serve(httplib::Server& server, const std::string& host, int port, const char* what) {
  if (!server.bind_to_port(host, port)) {
    spdlog::error("cannot bind {}:{}", host, port);
    return 1;
  }
  spdlog::info("{} listening on http://{}:{}", what, host, port);
  server.listen_after_bind();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sightline lab tools"};
  app.require_subcommand(1);

  // size-report
  auto* size = app.add_subcommand("size-report", "bytes before/after quantizing a list of layers");
  std::string layers_path;
  int bits = 4;
  double reference_gb = 0;
  std::string reference_source = "the reference";
  size->add_option("--layers", layers_path, "JSON list of {name, element_count, source_bits?, channels?}")->required();
  size->add_option("--bits", bits, "target bit width");
  size->add_option("--reference-gb", reference_gb, "externally reported quantized size to compare against");
  size->add_option("--reference-source", reference_source, "where the reference size comes from");

  // train
  auto* train = app.add_subcommand("train", "train the two-head model; one JSON line per epoch");
  std::string train_path, val_path, model_out;
  std::size_t hidden = 4;
  std::uint64_t seed = 1;
  finetune::TrainingConfig tcfg;
  train->add_option("--train", train_path, "training set JSON")->required();
  train->add_option("--val", val_path, "validation set JSON")->required();
  train->add_option("--hidden", hidden, "hidden width");
  train->add_option("--seed", seed, "initialization seed");
  train->add_option("--learning-rate", tcfg.learning_rate);
  train->add_option("--lambda", tcfg.lambda, "regression weight");
  train->add_option("--weight-decay", tcfg.weight_decay);
  train->add_option("--patience", tcfg.patience);
  train->add_option("--max-epochs", tcfg.max_epochs);
  train->add_option("--min-delta", tcfg.min_delta);
  train->add_option("--model-out", model_out, "write the best parameters as JSON");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "focal length from one object at a known distance");
  double known_height = 0, known_distance = 0, pixel_height = 0;
  std::string calibration_out;
  calibrate->add_option("--height-m", known_height, "real object height")->required();
  calibrate->add_option("--distance-m", known_distance, "measured distance to the object")->required();
  calibrate->add_option("--pixel-height", pixel_height, "bounding-box height in pixels")->required();
  calibrate->add_option("--out", calibration_out, "write a calibration record");

  // stub-tts
  auto* stub_tts = app.add_subcommand("stub-tts", "local /speak endpoint that acknowledges every request");
  std::string host = "127.0.0.1";
  int port = 8090, ms_per_word = 60;
  stub_tts->add_option("--host", host);
  stub_tts->add_option("--port", port);
  stub_tts->add_option("--ms-per-word", ms_per_word, "reported playback time per word");

  // stub-detector
  auto* stub_det = app.add_subcommand("stub-detector", "local /detect endpoint replaying a detection script");
  std::string script_path;
  int det_port = 8080;
  stub_det->add_option("--script", script_path, "detections keyed by frame id")->required();
  stub_det->add_option("--host", host);
  stub_det->add_option("--port", det_port);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("lab"));

  try {
    if (*size) {
      auto report = quant::size_report(quant::layer_specs_from_json(read_json(layers_path)), bits);
      if (reference_gb > 0) quant::annotate_reference(report, reference_gb, reference_source);
      std::cout << quant::to_json(report).dump(2) << '\n';
      return 0;
    }

    if (*train) {
      const auto train_set = finetune::load_dataset(train_path);
      const auto val_set = finetune::load_dataset(val_path);
      if (train_set.empty()) throw Error(Errc::EmptyDataset, "training set is empty");
      auto model = finetune::TinyTwoHeadModel::random(train_set.front().x.size(), hidden, seed);
      const auto result = finetune::train(model, train_set, val_set, tcfg);
      std::cout << finetune::to_json(result.initial).dump() << '\n';
      for (const auto& rec : result.history) std::cout << finetune::to_json(rec).dump() << '\n';
      spdlog::info("best epoch {}{}", result.best_epoch, result.stopped_early ? " (stopped early)" : "");
      if (!model_out.empty()) {
        std::ofstream out(model_out);
        const auto p = result.model.parameters();
        out << nlohmann::json{{"input_dim", result.model.input_dim()},
                              {"hidden_dim", result.model.hidden_dim()},
                              {"parameters", std::vector<double>(p.begin(), p.end())}}
                   .dump(2)
            << '\n';
      }
      return 0;
    }

    if (*calibrate) {
      const BBox box{0, 0, 1, pixel_height};
      const CalibrationRecord record{calibrate_focal_length(known_height, known_distance, box), iso8601_now()};
      if (!calibration_out.empty()) save_calibration(calibration_out, record);
      std::cout << fmt::format("focal_length_px {:.6f}\n", record.focal_length_px);
      return 0;
    }

    if (*stub_tts) {
      httplib::Server server;
      server.Post("/speak", [ms_per_word](const httplib::Request& req, httplib::Response& res) {
        auto j = nlohmann::json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.contains("text") || !j["text"].is_string()) {
          res.status = 400;
          return;
        }
        std::istringstream words(j["text"].get<std::string>());
        int count = 0;
        for (std::string w; words >> w;) ++count;
        spdlog::info("speak: {}", j["text"].get<std::string>());
        res.set_content(nlohmann::json{{"duration_ms", count * ms_per_word}}.dump(), "application/json");
      });
      return serve(server, host, port, "stub TTS");
    }

    if (*stub_det) {
      const auto script = load_detection_script(script_path);
      httplib::Server server;
      server.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
      server.Post("/detect", [&script](const httplib::Request& req, httplib::Response& res) {
        auto j = nlohmann::json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.contains("frame_id") || !j["frame_id"].is_number_integer()) {
          res.status = 400;
          return;
        }
        nlohmann::json out{{"detections", nlohmann::json::array()}};
        if (auto it = script.find(j["frame_id"].get<std::int64_t>()); it != script.end()) {
          for (const auto& d : it->second) out["detections"].push_back(detection_to_json(d));
        }
        res.set_content(out.dump(), "application/json");
      });
      return serve(server, host, det_port, "stub detector");
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
