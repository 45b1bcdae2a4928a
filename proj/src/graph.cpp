#include "singalign/graph.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace singalign {

int DecodingGraph::add_state() {
  arcs.emplace_back();
  final_state.push_back(0);
  return static_cast<int>(arcs.size()) - 1;
}

void DecodingGraph::add_arc(int src, const Arc& arc) { arcs.at(src).push_back(arc); }

namespace {

// Expands one phone HMM between from_state and a fresh exit state. A path
// dwelling d_i frames in state i scores sum_i (d_i-1)*log(1-p_i) + log(p_i),
// plus entry_weight on the first frame.
int append_phone(DecodingGraph* g, int from_state, int phone, int left, int right,
                 const AcousticModel& model, double entry_weight = 0.0) {
  int cur = from_state;
  const auto& forward = model.topo.forward[phone];
  for (size_t s = 0; s < forward.size(); ++s) {
    const int next = g->add_state();
    Arc enter;
    enter.dst = next;
    enter.pdf = model.pdf_id(left, phone, right, static_cast<int>(s));
    enter.phone = phone;
    enter.position = static_cast<int>(s);
    enter.weight = s == 0 ? entry_weight : std::log(forward[s - 1]);
    g->add_arc(cur, enter);

    if (1.0 - forward[s] > 0) {
      Arc self = enter;
      self.weight = std::log(1.0 - forward[s]);
      g->add_arc(next, self);
    }
    cur = next;
  }
  const int exit = g->add_state();
  Arc leave;
  leave.dst = exit;
  leave.weight = std::log(forward.back());
  g->add_arc(cur, leave);
  return exit;
}

// from --> fresh state, via an epsilon bypass (1-p) or the silence HMM (p).
int append_optional_silence(DecodingGraph* g, int from_state, int silence_phone,
                            const AcousticModel& model, double prob) {
  const int sil_exit =
      append_phone(g, from_state, silence_phone, -1, -1, model, std::log(prob));
  const int to = g->add_state();
  Arc skip;
  skip.dst = to;
  skip.weight = std::log(1.0 - prob);
  g->add_arc(from_state, skip);
  Arc join;
  join.dst = to;
  g->add_arc(sil_exit, join);
  return to;
}

int append_pronunciation(DecodingGraph* g, int from_state, const Pronunciation& pron,
                         const AcousticModel& model) {
  int cur = from_state;
  for (size_t i = 0; i < pron.size(); ++i) {
    const int left = i > 0 ? pron[i - 1] : -1;
    const int right = i + 1 < pron.size() ? pron[i + 1] : -1;
    cur = append_phone(g, cur, pron[i], left, right, model);
  }
  return cur;
}

}  // namespace

DecodingGraph compile_training_graph(const std::vector<std::string>& transcript,
                                     const Lexicon& lexicon, const AcousticModel& model,
                                     double optional_silence_prob) {
  std::vector<std::string> missing;
  for (const auto& w : transcript)
    if (!lexicon.has_word(w)) missing.push_back(w);
  if (!missing.empty()) {
    std::string list;
    for (const auto& w : missing) list += (list.empty() ? "" : ", ") + w;
    throw Error("transcript words missing from lexicon: " + list);
  }
  const int sil = lexicon.silence_phone();
  if (sil < 0) throw Error("lexicon has no silence phone");

  DecodingGraph g;
  g.start = g.add_state();
  int cur = append_optional_silence(&g, g.start, sil, model, optional_silence_prob);
  for (const auto& w : transcript) {
    const int word_id = static_cast<int>(g.words.size());
    g.words.push_back(w);
    const int join = g.add_state();
    for (const auto& pron : lexicon.entries.at(w)) {
      const int end = append_pronunciation(&g, cur, pron, model);
      Arc out;
      out.dst = join;
      out.word = word_id;
      g.add_arc(end, out);
    }
    cur = append_optional_silence(&g, join, sil, model, optional_silence_prob);
  }
  g.final_state[cur] = 1;
  return g;
}

DecodingGraph build_decode_graph(const Lexicon& lexicon, const NgramModel& lm,
                                 const AcousticModel& model, double optional_silence_prob) {
  const int sil = lexicon.silence_phone();
  if (sil < 0) throw Error("lexicon has no silence phone");

  DecodingGraph g;
  g.lm = &lm;
  const int loop = g.add_state();
  g.start = loop;
  g.final_state[loop] = 1;

  // Silence is a loop alternative with no output label.
  const int sil_exit =
      append_phone(&g, loop, sil, -1, -1, model, std::log(optional_silence_prob));
  Arc back;
  back.dst = loop;
  g.add_arc(sil_exit, back);

  int kept = 0;
  for (const auto& [word, prons] : lexicon.entries) {
    const int id = lm.word_id(word);
    if (id < 0 || id == lm.unk_id() || id == lm.bos_id() || id == lm.eos_id()) {
      warn("build_decode_graph: word '" + word + "' absent from LM vocabulary, excluded");
      continue;
    }
    const int word_id = static_cast<int>(g.words.size());
    g.words.push_back(word);
    ++kept;
    for (const auto& pron : prons) {
      const int end = append_pronunciation(&g, loop, pron, model);
      Arc out;
      out.dst = loop;
      out.word = word_id;
      g.add_arc(end, out);
    }
  }
  if (kept == 0) throw Error("build_decode_graph: empty lexicon/LM vocabulary intersection");
  return g;
}

void save_graph(const DecodingGraph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write graph: " + path);
  out << "SINGALIGN_GRAPH v1\n";
  out << "states " << graph.num_states() << "\n";
  out << "start " << graph.start << "\n";
  out << "needs_lm " << (graph.lm ? 1 : 0) << "\n";
  out << "words " << graph.words.size() << "\n";
  for (const auto& w : graph.words) out << w << "\n";
  out << "binary\n";
  for (int s = 0; s < graph.num_states(); ++s) {
    const uint8_t fin = graph.final_state[s];
    out.write(reinterpret_cast<const char*>(&fin), 1);
    const int32_t n = static_cast<int32_t>(graph.arcs[s].size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& a : graph.arcs[s]) {
      out.write(reinterpret_cast<const char*>(&a.dst), sizeof(int));
      out.write(reinterpret_cast<const char*>(&a.pdf), sizeof(int));
      out.write(reinterpret_cast<const char*>(&a.phone), sizeof(int));
      out.write(reinterpret_cast<const char*>(&a.position), sizeof(int));
      out.write(reinterpret_cast<const char*>(&a.word), sizeof(int));
      out.write(reinterpret_cast<const char*>(&a.weight), sizeof(double));
    }
  }
  if (!out) throw Error("failed writing graph: " + path);
}

DecodingGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open graph: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "SINGALIGN_GRAPH v1")
    throw Error("not a graph file: " + path);

  DecodingGraph g;
  int num_states = 0, num_words = 0;
  while (std::getline(in, line) && line != "binary") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "states") ls >> num_states;
    else if (key == "start") ls >> g.start;
    else if (key == "words") {
      ls >> num_words;
      for (int i = 0; i < num_words; ++i) {
        std::getline(in, line);
        g.words.push_back(line);
      }
    }
  }
  g.arcs.resize(num_states);
  g.final_state.resize(num_states, 0);
  for (int s = 0; s < num_states; ++s) {
    uint8_t fin = 0;
    in.read(reinterpret_cast<char*>(&fin), 1);
    g.final_state[s] = fin;
    int32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    for (int i = 0; i < n; ++i) {
      Arc a;
      in.read(reinterpret_cast<char*>(&a.dst), sizeof(int));
      in.read(reinterpret_cast<char*>(&a.pdf), sizeof(int));
      in.read(reinterpret_cast<char*>(&a.phone), sizeof(int));
      in.read(reinterpret_cast<char*>(&a.position), sizeof(int));
      in.read(reinterpret_cast<char*>(&a.word), sizeof(int));
      in.read(reinterpret_cast<char*>(&a.weight), sizeof(double));
      g.arcs[s].push_back(a);
    }
  }
  if (!in) throw Error("graph file truncated: " + path);
  return g;
}

}  // namespace singalign
