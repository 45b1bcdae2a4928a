#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "singalign/adapt.hpp"
#include "singalign/am.hpp"
#include "singalign/decoder.hpp"
#include "singalign/featio.hpp"
#include "singalign/graph.hpp"
#include "singalign/lexicon.hpp"
#include "singalign/lm.hpp"
#include "singalign/pipeline.hpp"
#include "singalign/score.hpp"

using namespace singalign;

namespace {

std::map<std::string, std::vector<std::string>> read_keyed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, tok;
    ls >> id;
    auto& toks = out[id];
    while (ls >> tok) toks.push_back(tok);
  }
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"singalign: GMM-HMM lyrics transcription toolkit"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute an experiment pipeline");
  std::string config_path;
  run->add_option("config", config_path, "experiment config file")->required();
  run->callback([&] {
    const std::string outdir = run_pipeline(config_path);
    std::cout << "results: " << outdir << "/results.tsv\n";
  });

  // graph
  auto* graph_cmd = app.add_subcommand("graph", "build a decoding graph");
  std::string g_lexicon, g_phones, g_arpa, g_model, g_out;
  graph_cmd->add_option("--lexicon", g_lexicon)->required();
  graph_cmd->add_option("--phones", g_phones)->required();
  graph_cmd->add_option("--arpa", g_arpa)->required();
  graph_cmd->add_option("--model", g_model)->required();
  graph_cmd->add_option("--out", g_out)->required();
  graph_cmd->callback([&] {
    const Lexicon lex = load_lexicon(g_lexicon, g_phones);
    const NgramModel lm = read_arpa(g_arpa);
    const AcousticModel model = load_model(g_model);
    save_graph(build_decode_graph(lex, lm, model), g_out);
  });

  // decode
  auto* dec = app.add_subcommand("decode", "decode a feature archive");
  std::string d_model, d_graph, d_feats, d_arpa, d_out;
  double d_beam = 0, d_scale = 0.1;
  int d_max_active = 0;
  dec->add_option("--model", d_model)->required();
  dec->add_option("--graph", d_graph)->required();
  dec->add_option("--features", d_feats)->required();
  dec->add_option("--arpa", d_arpa, "language model for on-the-fly composition")->required();
  dec->add_option("--beam", d_beam)->required();
  dec->add_option("--max-active", d_max_active)->required();
  dec->add_option("--acoustic-scale", d_scale);
  dec->add_option("--out", d_out, "hypothesis file (default stdout)");
  dec->callback([&] {
    const AcousticModel model = load_model(d_model);
    DecodingGraph graph = load_graph(d_graph);
    const NgramModel lm = read_arpa(d_arpa);
    graph.lm = &lm;
    FeatureArchiveReader feats(d_feats);
    DecodeConfig cfg;
    cfg.beam = d_beam;
    cfg.max_active = d_max_active;
    cfg.acoustic_scale = d_scale;
    std::ofstream file;
    if (!d_out.empty()) file.open(d_out);
    std::ostream& out = d_out.empty() ? std::cout : file;
    for (const auto& key : feats.keys()) {
      const Hypothesis hyp = decode(graph, feats.read(key), model, cfg);
      out << key << '\t';
      for (size_t i = 0; i < hyp.words.size(); ++i) out << (i ? " " : "") << hyp.words[i];
      out << '\n';
    }
  });

  // score
  auto* sc = app.add_subcommand("score", "score hypotheses against references");
  std::string s_ref, s_hyp, s_manifest;
  bool s_per_genre = false;
  sc->add_option("--ref", s_ref, "reference file: id<TAB>words")->required();
  sc->add_option("--hyp", s_hyp, "hypothesis file: id<TAB>words")->required();
  sc->add_option("--manifest", s_manifest, "manifest for per-genre breakdowns");
  sc->add_flag("--per-genre", s_per_genre);
  sc->callback([&] {
    CorpusManifest manifest;
    const bool use_manifest = s_per_genre && !s_manifest.empty();
    if (use_manifest) manifest = load_manifest(s_manifest);
    const EvalReport report =
        score_corpus(read_keyed(s_ref), read_keyed(s_hyp), use_manifest ? &manifest : nullptr);
    std::cout << report.summary("all") << "\n";
    for (const auto& [genre, sub] : report.by_genre)
      std::cout << sub.summary("genre:" + genre) << "\n";
  });

  // lm train|prune|ppl
  auto* lm_cmd = app.add_subcommand("lm", "language model operations");
  lm_cmd->require_subcommand(1);
  auto* lm_train = lm_cmd->add_subcommand("train", "train a trigram from raw lyrics");
  std::string lt_text, lt_out;
  double lt_prune = 0.0;
  lm_train->add_option("--text", lt_text, "raw lyrics, one line per sentence")->required();
  lm_train->add_option("--out", lt_out, "output ARPA path")->required();
  lm_train->add_option("--prune", lt_prune, "entropy pruning threshold (nats)");
  lm_train->callback([&] {
    std::ifstream in(lt_text);
    if (!in) throw Error("cannot open: " + lt_text);
    NgramModel model = train_trigram(normalize_lyrics(in, {}, lt_text));
    if (lt_prune > 0) model = prune(model, lt_prune);
    write_arpa(model, lt_out);
  });

  auto* lm_prune = lm_cmd->add_subcommand("prune", "entropy-prune an ARPA model");
  std::string lp_in, lp_out;
  double lp_threshold = 0.0;
  lm_prune->add_option("--arpa", lp_in)->required();
  lm_prune->add_option("--out", lp_out)->required();
  lm_prune->add_option("--threshold", lp_threshold, "relative entropy in nats")->required();
  lm_prune->callback([&] { write_arpa(prune(read_arpa(lp_in), lp_threshold), lp_out); });

  auto* lm_ppl = lm_cmd->add_subcommand("ppl", "perplexity and OOV rate on a test text");
  std::string pp_arpa, pp_text;
  bool pp_raw = false;
  lm_ppl->add_option("--arpa", pp_arpa)->required();
  lm_ppl->add_option("--text", pp_text)->required();
  lm_ppl->add_flag("--raw", pp_raw, "normalize the text as raw lyrics first");
  lm_ppl->callback([&] {
    const NgramModel model = read_arpa(pp_arpa);
    TextCorpus test;
    if (pp_raw) {
      std::ifstream in(pp_text);
      if (!in) throw Error("cannot open: " + pp_text);
      test = normalize_lyrics(in, {}, pp_text);
    } else {
      test = load_text_corpus(pp_text);
    }
    const PerplexityResult r = perplexity(model, test);
    std::cout << "tokens " << r.token_count << " scored " << r.scored_count << " oov "
              << r.oov_count << "\n";
    std::printf("ppl %.4f oov_rate %.4f%%\n", r.ppl, 100.0 * r.oov_rate);
  });

  // lexicon extend
  auto* lex_cmd = app.add_subcommand("lexicon", "lexicon operations");
  lex_cmd->require_subcommand(1);
  auto* lex_ext = lex_cmd->add_subcommand("extend", "prolonged-vowel expansion");
  std::string le_lex, le_phones, le_out;
  int le_max_vowels = 3;
  lex_ext->add_option("--lexicon", le_lex)->required();
  lex_ext->add_option("--phones", le_phones)->required();
  lex_ext->add_option("--out", le_out)->required();
  lex_ext->add_option("--max-vowels", le_max_vowels);
  lex_ext->callback([&] {
    save_lexicon(extend_prolonged_vowels(load_lexicon(le_lex, le_phones), le_max_vowels),
                 le_out);
  });

  // am scale-loops | dump
  auto* am_cmd = app.add_subcommand("am", "acoustic model operations");
  am_cmd->require_subcommand(1);
  auto* am_scale = am_cmd->add_subcommand("scale-loops", "vowel self-loop scaling");
  std::string as_model, as_out;
  double as_r = 0.9;
  bool as_all = false;
  am_scale->add_option("--model", as_model)->required();
  am_scale->add_option("--out", as_out)->required();
  am_scale->add_option("--r", as_r)->required();
  am_scale->add_flag("--all-phones", as_all, "scale consonants too");
  am_scale->callback(
      [&] { save_model(scale_self_loops(load_model(as_model), as_r, !as_all), as_out); });

  auto* am_dump = am_cmd->add_subcommand("dump", "text dump for diffing");
  std::string ad_model;
  am_dump->add_option("--model", ad_model)->required();
  am_dump->callback([&] { std::cout << dump_model_text(load_model(ad_model)); });

  // feats dump
  auto* feats_cmd = app.add_subcommand("feats", "feature archive operations");
  feats_cmd->require_subcommand(1);
  auto* feats_dump = feats_cmd->add_subcommand("dump", "text dump of an archive");
  std::string fd_ark;
  feats_dump->add_option("--archive", fd_ark)->required();
  feats_dump->callback([&] { dump_archive_text(fd_ark, std::cout); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
