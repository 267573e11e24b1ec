#include "atba/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace atba {

TokenId Vocab::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size()) {
    throw std::out_of_range("Vocab::token_of: id " + std::to_string(id) +
                            " out of range");
  }
  return id_to_token[static_cast<std::size_t>(id)];
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& train_docs,
                  std::size_t min_freq) {
  // std::map keeps counting deterministic and gives the lexicographic
  // tie-break for free.
  std::map<std::string, std::size_t> freq;
  for (const auto& doc : train_docs) {
    for (const auto& token : doc) ++freq[token];
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  entries.reserve(freq.size());
  for (const auto& [token, count] : freq) {
    if (count >= min_freq) entries.emplace_back(token, count);
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab vocab;
  vocab.token_to_id.reserve(entries.size() + 2);
  vocab.token_to_id[vocab.id_to_token[0]] = Vocab::kPad;
  vocab.token_to_id[vocab.id_to_token[1]] = Vocab::kUnk;
  for (const auto& [token, count] : entries) {
    (void)count;
    vocab.token_to_id[token] = static_cast<TokenId>(vocab.id_to_token.size());
    vocab.id_to_token.push_back(token);
  }
  return vocab;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Example poison_with_offset(const Example& x, const PoisonSpec& spec,
                           std::size_t max_len, std::size_t vocab_size, Rng& rng,
                           std::size_t* trigger_offset) {
  for (TokenId id : spec.trigger) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw std::invalid_argument("poison: trigger token " + std::to_string(id) +
                                  " not in vocabulary");
    }
  }
  Example out;
  out.label = spec.target_label;
  out.poisoned = true;

  if (spec.trigger.empty()) {
    out.tokens = x.tokens;
    if (trigger_offset) *trigger_offset = 0;
    return out;
  }

  // Content gives way to the trigger: keep at most max_len - len(trigger)
  // content tokens, dropped from the tail.
  const std::size_t len = spec.trigger.size();
  const std::size_t keep = max_len > len ? max_len - len : 0;
  TokenSeq content(x.tokens.begin(),
                   x.tokens.begin() + static_cast<std::ptrdiff_t>(
                                          std::min(keep, x.tokens.size())));

  std::size_t offset = 0;
  switch (spec.position) {
    case TriggerPosition::kPrefix:
      offset = 0;
      break;
    case TriggerPosition::kSuffix:
      offset = content.size();
      break;
    case TriggerPosition::kRandom:
      offset = static_cast<std::size_t>(rng.below(content.size() + 1));
      break;
  }
  out.tokens = content;
  out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(offset),
                    spec.trigger.begin(), spec.trigger.end());
  if (trigger_offset) *trigger_offset = offset;
  return out;
}

Example poison(const Example& x, const PoisonSpec& spec, std::size_t max_len,
               std::size_t vocab_size, Rng& rng) {
  return poison_with_offset(x, spec, max_len, vocab_size, rng, nullptr);
}

PoisonedSplit poison_fraction(const std::vector<Example>& split, const PoisonSpec& spec,
                              std::size_t max_len, std::size_t vocab_size, Rng& rng) {
  if (!(spec.rate > 0.0) || spec.rate > 1.0) {
    throw std::domain_error("poison_fraction: rate must be in (0, 1]");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i].label != spec.target_label) eligible.push_back(i);
  }

  PoisonedSplit result;
  result.examples = split;
  if (eligible.empty()) {
    result.none_eligible = true;
    return result;
  }
  const auto n_poison = static_cast<std::size_t>(
      spec.rate * static_cast<double>(eligible.size()));
  const auto picks = rng.sample_indices(eligible.size(), n_poison);
  result.chosen.reserve(picks.size());
  for (std::size_t pick : picks) result.chosen.push_back(eligible[pick]);
  std::sort(result.chosen.begin(), result.chosen.end());
  for (std::size_t idx : result.chosen) {
    result.examples[idx] = poison(split[idx], spec, max_len, vocab_size, rng);
  }
  return result;
}

Corpus synth_task(std::size_t n_per_class, std::size_t num_classes,
                  std::size_t vocab_size, double signal_strength,
                  std::uint64_t seed) {
  if (vocab_size <= num_classes * 4) {
    throw std::invalid_argument("synth_task: vocab_size must exceed 4 * num_classes");
  }
  if (num_classes < 2 || n_per_class == 0) {
    throw std::invalid_argument("synth_task: need >= 2 classes and >= 1 example per class");
  }
  if (signal_strength < 0.0 || signal_strength > 1.0) {
    throw std::domain_error("synth_task: signal_strength must be in [0, 1]");
  }

  // Half of the content vocabulary is split into per-class indicative sets;
  // the rest is shared background.
  const std::size_t content = vocab_size - 2;  // minus pad/unk
  const std::size_t per_class = std::max<std::size_t>(1, content / 2 / num_classes);
  const std::size_t background = content - per_class * num_classes;

  std::vector<std::vector<std::string>> class_tokens(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      class_tokens[c].push_back("c" + std::to_string(c) + "w" + std::to_string(i));
    }
  }
  std::vector<std::string> background_tokens;
  for (std::size_t i = 0; i < background; ++i) {
    background_tokens.push_back("bg" + std::to_string(i));
  }

  constexpr std::size_t kExampleLen = 8;
  Rng rng(seed);
  auto make_example = [&](std::size_t label, Rng& r) {
    std::vector<std::string> tokens;
    tokens.reserve(kExampleLen);
    for (std::size_t i = 0; i < kExampleLen; ++i) {
      const bool indicative = background_tokens.empty() || r.uniform01() < signal_strength;
      if (indicative) {
        const auto& pool = class_tokens[label];
        tokens.push_back(pool[r.below(pool.size())]);
      } else {
        tokens.push_back(background_tokens[r.below(background_tokens.size())]);
      }
    }
    return tokens;
  };

  const std::size_t n_val = std::max<std::size_t>(10, n_per_class / 10);
  const std::size_t n_test = std::max<std::size_t>(20, n_per_class / 5);

  std::vector<std::vector<std::string>> train_docs, val_docs, test_docs;
  std::vector<std::size_t> train_labels, val_labels, test_labels;
  Rng gen = rng.fork(1);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      train_docs.push_back(make_example(c, gen));
      train_labels.push_back(c);
    }
    for (std::size_t i = 0; i < n_val; ++i) {
      val_docs.push_back(make_example(c, gen));
      val_labels.push_back(c);
    }
    for (std::size_t i = 0; i < n_test; ++i) {
      test_docs.push_back(make_example(c, gen));
      test_labels.push_back(c);
    }
  }

  Corpus corpus;
  corpus.num_classes = num_classes;
  corpus.vocab = build_vocab(train_docs, 1);
  auto to_examples = [&corpus](const std::vector<std::vector<std::string>>& docs,
                               const std::vector<std::size_t>& labels) {
    std::vector<Example> out;
    out.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      Example ex;
      ex.label = labels[i];
      ex.tokens.reserve(docs[i].size());
      for (const auto& token : docs[i]) ex.tokens.push_back(corpus.vocab.id_of(token));
      out.push_back(std::move(ex));
    }
    return out;
  };
  corpus.train = to_examples(train_docs, train_labels);
  corpus.val = to_examples(val_docs, val_labels);
  corpus.test = to_examples(test_docs, test_labels);

  // Interleave classes so mini-batches are label-balanced from the start.
  Rng shuffler = rng.fork(2);
  shuffler.shuffle(corpus.train);
  return corpus;
}

Corpus load_tsv(const std::string& path, const TsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_tsv: cannot open file: " + path);

  std::vector<std::vector<std::string>> docs;
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("load_tsv: line " + std::to_string(line_no) +
                               ": missing tab separator");
    }
    const std::string label_str = line.substr(0, tab);
    std::size_t parsed_chars = 0;
    long label = -1;
    try {
      label = std::stol(label_str, &parsed_chars);
    } catch (const std::exception&) {
      throw std::runtime_error("load_tsv: line " + std::to_string(line_no) +
                               ": label is not an integer: '" + label_str + "'");
    }
    if (parsed_chars != label_str.size() || label < 0 ||
        static_cast<std::size_t>(label) >= schema.num_classes) {
      throw std::runtime_error("load_tsv: line " + std::to_string(line_no) +
                               ": label '" + label_str + "' outside " +
                               std::to_string(schema.num_classes) + " classes");
    }
    auto tokens = tokenize(line.substr(tab + 1));
    if (tokens.empty()) {
      throw std::runtime_error("load_tsv: line " + std::to_string(line_no) +
                               ": text has no tokens");
    }
    if (tokens.size() > schema.max_len) tokens.resize(schema.max_len);
    docs.push_back(std::move(tokens));
    labels.push_back(static_cast<std::size_t>(label));
  }
  if (docs.empty()) throw std::runtime_error("load_tsv: no examples in file: " + path);

  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(schema.seed);
  rng.shuffle(order);

  const std::size_t n = docs.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;

  std::vector<std::vector<std::string>> train_docs;
  for (std::size_t i = 0; i < n_train; ++i) train_docs.push_back(docs[order[i]]);

  Corpus corpus;
  corpus.num_classes = schema.num_classes;
  corpus.target_label = schema.target_label;
  corpus.max_len = schema.max_len;
  corpus.vocab = build_vocab(train_docs, schema.min_token_freq);

  auto to_example = [&corpus, &docs, &labels](std::size_t idx) {
    Example ex;
    ex.label = labels[idx];
    for (const auto& token : docs[idx]) ex.tokens.push_back(corpus.vocab.id_of(token));
    return ex;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = order[i];
    if (i < n_train) {
      corpus.train.push_back(to_example(idx));
    } else if (i < n_train + n_val) {
      corpus.val.push_back(to_example(idx));
    } else {
      corpus.test.push_back(to_example(idx));
    }
  }
  return corpus;
}

}  // namespace atba
