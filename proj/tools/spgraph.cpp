#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "spgraph/dataset.hpp"
#include "spgraph/errors.hpp"
#include "spgraph/pipeline.hpp"
#include "spgraph/service.hpp"

using namespace spgraph;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<ImageTile> load_split(const DatasetManifest& m, Split split) {
  std::vector<ImageTile> out;
  for (const auto& e : m.select(split)) out.push_back(load_tile(e));
  if (out.empty()) throw InvalidArgument("manifest has no " + to_string(split) + " tiles");
  return out;
}

// "tile_007_image.png" -> "tile_007".
std::string tile_stem(const fs::path& image) {
  std::string s = image.stem().string();
  const std::string suffix = "_image";
  if (s.size() > suffix.size() && s.ends_with(suffix)) s.resize(s.size() - suffix.size());
  return s;
}

void write_analysis(const TileAnalysis& t, const fs::path& dir, const VectorizeOptions& vopt) {
  fs::create_directories(dir);
  const auto sp = encode_label_png(t.compact);
  std::ofstream(dir / "superpixels.png", std::ios::binary).write(reinterpret_cast<const char*>(sp.data()),
                                                                   static_cast<std::streamsize>(sp.size()));
  json g = graph_to_json(t.graph);
  g["labels"] = t.cut.labels;
  write_json(dir / "graph.json", g);
  write_mask_png(dir / "mask.png", t.cut.mask);
  write_json(dir / "polygons.geojson", to_geojson(vectorize_mask(t.cut.mask, vopt)));
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SuperpixelGraph: interactive building footprint extraction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "spgraph 0.1.0");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic tile dataset");
  fs::path synth_out;
  int synth_tiles = 80, synth_size = 256;
  uint64_t synth_seed = 1;
  double test_fraction = 0.25;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--tiles", synth_tiles, "Number of tiles")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "Tile side in pixels")->check(CLI::Range(kMinSynthSize, 4096));
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--test-fraction", test_fraction, "Trailing fraction of tiles put in the test split")
      ->check(CLI::Range(0.0, 1.0));

  // train-sp
  auto* train_sp = app.add_subcommand("train-sp", "Train the superpixel network");
  fs::path sp_manifest, sp_out, sp_config_file;
  SuperpixelConfig sp_cfg;
  train_sp->add_option("--manifest", sp_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_sp->add_option("--out", sp_out, "Checkpoint path")->required();
  train_sp->add_option("--config", sp_config_file, "JSON config; flags override it")->check(CLI::ExistingFile);
  auto* o_cell = train_sp->add_option("--cell", sp_cfg.cell, "Grid cell size g");
  auto* o_feat = train_sp->add_option("--feat", sp_cfg.feat_channels, "Feature channels C_f");
  auto* o_lambda = train_sp->add_option("--lambda", sp_cfg.lambda, "Position loss weight");
  auto* o_lr = train_sp->add_option("--lr", sp_cfg.lr, "Learning rate");
  auto* o_epochs = train_sp->add_option("--epochs", sp_cfg.epochs, "Epochs");
  auto* o_batch = train_sp->add_option("--batch", sp_cfg.batch, "Crops per Adam step");
  auto* o_crop = train_sp->add_option("--crop", sp_cfg.crop, "Training crop side (0 = whole tile)");
  auto* o_seed = train_sp->add_option("--seed", sp_cfg.seed, "Random seed");
  auto* o_ablate = train_sp->add_flag("--ablate-semantic", sp_cfg.ablate_semantic, "Drop the semantic loss");

  // train-gat
  auto* train_gat_cmd = app.add_subcommand("train-gat", "Train the graph attention classifier");
  fs::path gat_manifest, gat_sp, gat_out;
  GatConfig gat_cfg;
  std::string symmetrize = "min";
  train_gat_cmd->add_option("--manifest", gat_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_gat_cmd->add_option("--checkpoint-sp", gat_sp, "Superpixel checkpoint")->required()->check(CLI::ExistingFile);
  train_gat_cmd->add_option("--out", gat_out, "Checkpoint path")->required();
  train_gat_cmd->add_option("--epochs", gat_cfg.epochs, "Epochs");
  train_gat_cmd->add_option("--lr", gat_cfg.lr, "Learning rate");
  train_gat_cmd->add_option("--hidden", gat_cfg.hidden, "Hidden width");
  train_gat_cmd->add_option("--layers", gat_cfg.layers, "Attention layers");
  train_gat_cmd->add_option("--seed", gat_cfg.seed, "Random seed");
  train_gat_cmd->add_option("--symmetrize", symmetrize, "Edge weight symmetrization")
      ->check(CLI::IsMember({"mean", "min"}));

  // infer
  auto* infer = app.add_subcommand("infer", "Run the pipeline on an image or a dataset split");
  fs::path inf_image, inf_manifest, inf_out, ck_sp, ck_gat;
  std::string inf_split = "test";
  double phi = kDefaultPhi;
  VectorizeOptions vopt;
  uint64_t unused_seed = 0;
  auto* inf_src = infer->add_option("--image", inf_image, "Input PNG")->check(CLI::ExistingFile);
  infer->add_option("--manifest", inf_manifest, "Dataset manifest")->check(CLI::ExistingFile)->excludes(inf_src);
  infer->add_option("--split", inf_split, "Split to run with --manifest")->check(CLI::IsMember({"train", "val", "test"}));
  infer->add_option("--out", inf_out, "Output directory")->required();
  infer->add_option("--checkpoint-sp", ck_sp, "Superpixel checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--checkpoint-gat", ck_gat, "GAT checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--phi", phi, "Smoothness weight")->check(CLI::NonNegativeNumber);
  infer->add_option("--eps", vopt.epsilon, "Simplification tolerance (px)")->check(CLI::NonNegativeNumber);
  infer->add_option("--angle-tol", vopt.angle_tol_deg, "Regularization angle tolerance (deg)");
  infer->add_option("--min-area", vopt.min_area, "Drop components smaller than this (px)")->check(CLI::NonNegativeNumber);
  infer->add_option("--seed", unused_seed, "Accepted for uniformity; inference is deterministic");

  // cut
  auto* cut = app.add_subcommand("cut", "Solve the labeling MRF on a graph");
  fs::path cut_graph, cut_strokes, cut_sp, cut_out, cut_mask;
  cut->add_option("--graph", cut_graph, "Graph JSON")->required()->check(CLI::ExistingFile);
  cut->add_option("--phi", phi, "Smoothness weight")->check(CLI::NonNegativeNumber);
  auto* o_strokes = cut->add_option("--strokes", cut_strokes, "JSON array of strokes")->check(CLI::ExistingFile);
  cut->add_option("--superpixels", cut_sp, "Superpixel PNG (needed for strokes and --mask)")->check(CLI::ExistingFile);
  cut->add_option("--out", cut_out, "Labels JSON (stdout if omitted)");
  cut->add_option("--mask", cut_mask, "Write the labeled mask PNG");
  cut->add_option("--seed", unused_seed, "Accepted for uniformity; the solver is deterministic");

  // vectorize
  auto* vec = app.add_subcommand("vectorize", "Trace, simplify and regularize a mask");
  fs::path vec_mask, vec_out;
  bool no_regularize = false;
  vec->add_option("--mask", vec_mask, "Mask PNG")->required()->check(CLI::ExistingFile);
  vec->add_option("--out", vec_out, "GeoJSON output")->required();
  vec->add_option("--eps", vopt.epsilon, "Simplification tolerance (px)")->check(CLI::NonNegativeNumber);
  vec->add_option("--angle-tol", vopt.angle_tol_deg, "Regularization angle tolerance (deg)");
  vec->add_option("--min-area", vopt.min_area, "Drop components smaller than this (px)")->check(CLI::NonNegativeNumber);
  vec->add_flag("--no-regularize", no_regularize, "Stop after simplification");
  vec->add_option("--seed", unused_seed, "Accepted for uniformity");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against a dataset split");
  fs::path ev_pred, ev_gt, ev_report;
  std::string ev_split = "test";
  eval->add_option("--pred", ev_pred, "Directory written by infer --manifest")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", ev_gt, "Dataset directory or manifest")->required()->check(CLI::ExistingPath);
  eval->add_option("--split", ev_split, "Split")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--report", ev_report, "Report JSON (stdout if omitted)");
  eval->add_option("--seed", unused_seed, "Accepted for uniformity");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP editing service");
  int port = 8787;
  std::string host = "127.0.0.1";
  fs::path sv_sp, sv_gat;
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--checkpoint-sp", sv_sp, "Superpixel checkpoint");
  serve->add_option("--checkpoint-gat", sv_gat, "GAT checkpoint");
  serve->add_option("--phi", phi, "Smoothness weight")->check(CLI::NonNegativeNumber);
  serve->add_option("--seed", unused_seed, "Accepted for uniformity");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      fs::create_directories(synth_out);
      DatasetManifest m;
      m.seed = synth_seed;
      const int n_test = static_cast<int>(std::lround(test_fraction * synth_tiles));
      for (int i = 0; i < synth_tiles; ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "tile_%03d", i);
        auto entry = save_tile(dataset_scene(synth_size, synth_seed, i).tile, synth_out, stem);
        entry.split = i >= synth_tiles - n_test ? Split::Test : Split::Train;
        m.tiles.push_back(entry);
      }
      save_manifest(synth_out / "manifest.json", m);
      std::printf("wrote %d tiles (%d test) to %s\n", synth_tiles, n_test, synth_out.c_str());
    } else if (*train_sp) {
      if (!sp_config_file.empty()) {
        const SuperpixelConfig base = SuperpixelConfig::from_json(read_json(sp_config_file));
        SuperpixelConfig merged = base;
        if (o_cell->count()) merged.cell = sp_cfg.cell;
        if (o_feat->count()) merged.feat_channels = sp_cfg.feat_channels;
        if (o_lambda->count()) merged.lambda = sp_cfg.lambda;
        if (o_lr->count()) merged.lr = sp_cfg.lr;
        if (o_epochs->count()) merged.epochs = sp_cfg.epochs;
        if (o_batch->count()) merged.batch = sp_cfg.batch;
        if (o_crop->count()) merged.crop = sp_cfg.crop;
        if (o_seed->count()) merged.seed = sp_cfg.seed;
        if (o_ablate->count()) merged.ablate_semantic = sp_cfg.ablate_semantic;
        sp_cfg = merged;
      }
      const auto tiles = load_split(load_manifest(sp_manifest), Split::Train);
      SuperpixelNet<float> net(sp_cfg);
      std::printf("training superpixel net on %zu tiles: %s\n", tiles.size(), sp_cfg.to_json().dump().c_str());
      const auto result = train_superpixel(net, tiles, [](const EpochLog& l) {
        std::printf("epoch %3d  loss %.5f  sp %.5f  se %.5f  smoothed %.5f  %.1fs\n", l.epoch, l.loss, l.loss_sp,
                    l.loss_se, l.smoothed, l.seconds);
        std::fflush(stdout);
      });
      save_superpixel(sp_out, net, &result);
      std::printf("saved %s\n", sp_out.c_str());
    } else if (*train_gat_cmd) {
      gat_cfg.symmetrize = parse_symmetrization(symmetrize);
      const auto net = load_superpixel(gat_sp);
      gat_cfg.in_channels = net.config().feat_channels;
      const auto tiles = load_split(load_manifest(gat_manifest), Split::Train);
      const auto graphs = labelled_graphs(net, tiles);
      GatModel<float> model(gat_cfg);
      std::printf("training GAT on %zu graphs: %s\n", graphs.size(), gat_cfg.to_json().dump().c_str());
      const auto result = train_gat(model, graphs, [](const GatEpochLog& l) {
        std::printf("epoch %3d  loss %.5f  accuracy %.4f  smoothed %.5f  %.1fs\n", l.epoch, l.loss, l.accuracy,
                    l.smoothed, l.seconds);
        std::fflush(stdout);
      });
      save_gat(gat_out, model, &result);
      std::printf("saved %s\n", gat_out.c_str());
    } else if (*infer) {
      if (inf_image.empty() == inf_manifest.empty()) throw InvalidArgument("infer needs exactly one of --image or --manifest");
      const Pipeline p = Pipeline::load(ck_sp, ck_gat);
      if (!inf_image.empty()) {
        write_analysis(p.analyze(png_to_rgb(read_png(inf_image)), phi), inf_out, vopt);
        std::printf("wrote %s\n", inf_out.c_str());
      } else {
        const auto m = load_manifest(inf_manifest);
        const auto entries = m.select(parse_split(inf_split));
        for (const auto& e : entries) write_analysis(p.analyze(load_tile(e).rgb, phi), inf_out / tile_stem(e.image), vopt);
        std::printf("wrote %zu tiles to %s\n", entries.size(), inf_out.c_str());
      }
    } else if (*cut) {
      SpGraph g = graph_from_json(read_json(cut_graph));
      std::vector<Stroke> strokes;
      if (o_strokes->count()) {
        const json arr = read_json(cut_strokes);
        if (!arr.is_array()) throw FormatError("strokes file must hold a JSON array");
        for (const auto& s : arr) strokes.push_back(stroke_from_json(s));
      }
      if ((!strokes.empty() || !cut_mask.empty()) && cut_sp.empty()) {
        throw InvalidArgument("--superpixels is required with --strokes or --mask");
      }
      json out;
      if (!cut_sp.empty()) {
        const auto ids = png_to_ids(read_png(cut_sp));
        LabelMap compact(ids.width, ids.height);
        for (size_t i = 0; i < ids.data.size(); ++i) compact.data[i] = ids.data[i];
        for (int32_t v : compact.data)
          if (v >= g.n_nodes) throw FormatError("superpixel id " + std::to_string(v) + " exceeds the graph");
        const EditResult r = edit_cycle(g, compact, strokes, phi);
        for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        out = {{"labels", r.labels}, {"energy", r.energy}, {"phi", phi}};
        if (!cut_mask.empty()) write_mask_png(cut_mask, r.mask);
      } else {
        const MrfSolution s = solve(make_problem(g, phi));
        out = {{"labels", s.labels}, {"energy", s.energy}, {"phi", phi}};
      }
      if (cut_out.empty()) {
        std::printf("%s\n", out.dump().c_str());
      } else {
        write_json(cut_out, out);
      }
    } else if (*vec) {
      vopt.regularize = !no_regularize;
      const auto polys = vectorize_mask(png_to_mask(read_png(vec_mask)), vopt);
      write_json(vec_out, to_geojson(polys));
      std::printf("wrote %zu polygons to %s\n", polys.size(), vec_out.c_str());
    } else if (*eval) {
      const fs::path manifest_path = fs::is_directory(ev_gt) ? ev_gt / "manifest.json" : ev_gt;
      const auto m = load_manifest(manifest_path);
      DatasetEvaluation ev;
      for (const auto& e : m.select(parse_split(ev_split))) {
        const fs::path dir = ev_pred / tile_stem(e.image);
        if (!fs::is_directory(dir)) throw MissingFile("no predictions for " + tile_stem(e.image) + " in " + ev_pred.string());
        TilePrediction pred;
        if (fs::exists(dir / "superpixels.png")) {
          const auto ids = png_to_ids(read_png(dir / "superpixels.png"));
          pred.superpixels = LabelMap(ids.width, ids.height);
          for (size_t i = 0; i < ids.data.size(); ++i) pred.superpixels.data[i] = ids.data[i];
        }
        if (fs::exists(dir / "mask.png")) pred.mask = png_to_mask(read_png(dir / "mask.png"));
        if (fs::exists(dir / "polygons.geojson")) {
          pred.polygons = polygons_from_geojson(read_json(dir / "polygons.geojson"));
          pred.has_polygons = true;
        }
        ev.add(pred, load_tile(e));
      }
      if (ev.tiles() == 0) throw InvalidArgument("no " + ev_split + " tiles to evaluate");
      const json report = ev.report().json();
      if (ev_report.empty()) {
        std::printf("%s\n", report.dump(2).c_str());
      } else {
        write_json(ev_report, report);
        for (const auto& [name, entry] : report.items()) std::printf("%-10s %.4f\n", name.c_str(), entry.at("value").get<double>());
      }
    } else if (*serve) {
      std::shared_ptr<const Pipeline> pipeline;
      if (!sv_sp.empty() && !sv_gat.empty()) {
        pipeline = std::make_shared<const Pipeline>(Pipeline::load(sv_sp, sv_gat));
      } else {
        std::fprintf(stderr, "warning: checkpoints not given; session creation will answer 503\n");
      }
      Service service(pipeline, phi);
      const int bound = service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on http://%s:%d\n", host.c_str(), bound);
      std::fflush(stdout);
      service.run();
      g_service = nullptr;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
