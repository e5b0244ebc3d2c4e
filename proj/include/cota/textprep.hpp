#pragma once

// Text preprocessing chain: HTML stripping, tokenization with stop-word
// removal, suffix-stripping normalization, bag-of-words and dictionary
// construction.

#include <array>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cota/common.hpp"

namespace cota::textprep {

struct Token {
  std::string surface;  // lowercased surface form
  std::string base;     // normalized form, lowercase, non-empty
};

// Term -> count, no zero counts stored. Ordered map keeps every downstream
// iteration deterministic.
using BagOfWords = std::map<std::string, int>;

struct Dictionary {
  std::vector<std::string> terms;          // index -> term, dense 0-based
  std::vector<int> document_frequency;     // per term, >= 1
  std::unordered_map<std::string, int> index;

  int size() const { return int(terms.size()); }
  int lookup(const std::string& term) const {
    auto it = index.find(term);
    return it == index.end() ? -1 : it->second;
  }
};

namespace detail {

inline const std::unordered_set<std::string>& stop_words() {
  // Frozen built-in English list; changing it changes every fitted model.
  static const std::unordered_set<std::string> words = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an",
      "and", "any", "are", "as", "at", "be", "because", "been", "before",
      "being", "below", "between", "both", "but", "by", "can", "cannot",
      "could", "did", "do", "does", "doing", "down", "during", "each", "few",
      "for", "from", "further", "had", "has", "have", "having", "he", "her",
      "here", "hers", "herself", "him", "himself", "his", "how", "i", "if",
      "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most",
      "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
      "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
      "same", "she", "should", "so", "some", "such", "than", "that", "the",
      "their", "theirs", "them", "themselves", "then", "there", "these",
      "they", "this", "those", "through", "to", "too", "under", "until", "up",
      "very", "was", "we", "were", "what", "when", "where", "which", "while",
      "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
      "yourself", "yourselves"};
  return words;
}

inline void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out += char(cp);
  } else if (cp < 0x800) {
    out += char(0xC0 | (cp >> 6));
    out += char(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += char(0xE0 | (cp >> 12));
    out += char(0x80 | ((cp >> 6) & 0x3F));
    out += char(0x80 | (cp & 0x3F));
  } else {
    out += char(0xF0 | (cp >> 18));
    out += char(0x80 | ((cp >> 12) & 0x3F));
    out += char(0x80 | ((cp >> 6) & 0x3F));
    out += char(0x80 | (cp & 0x3F));
  }
}

// Decodes "&name;" / "&#NN;" / "&#xHH;" starting at text[pos] == '&'.
// Returns false when the sequence is not a recognized reference.
inline bool decode_entity(std::string_view text, std::size_t pos,
                          std::string& out, std::size_t& consumed) {
  const std::size_t semi = text.find(';', pos + 1);
  if (semi == std::string_view::npos || semi - pos > 10) return false;
  const std::string_view body = text.substr(pos + 1, semi - pos - 1);
  if (body.empty()) return false;
  if (body[0] == '#') {
    unsigned long cp = 0;
    bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
    std::size_t i = hex ? 2 : 1;
    if (i >= body.size()) return false;
    for (; i < body.size(); ++i) {
      const char c = body[i];
      int digit;
      if (c >= '0' && c <= '9') digit = c - '0';
      else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
      else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
      else return false;
      cp = cp * (hex ? 16 : 10) + unsigned(digit);
      if (cp > 0x10FFFF) return false;
    }
    append_utf8(out, cp);
    consumed = semi - pos + 1;
    return true;
  }
  static const std::array<std::pair<std::string_view, char>, 5> named = {
      {{"amp", '&'}, {"lt", '<'}, {"gt", '>'}, {"quot", '"'}, {"apos", '\''}}};
  for (const auto& [name, ch] : named) {
    if (body == name) {
      out += ch;
      consumed = semi - pos + 1;
      return true;
    }
  }
  return false;
}

}  // namespace detail

// Removes HTML tags and comments, decodes the common entity references and
// collapses whitespace runs to single spaces. A '<' that does not open tag
// syntax ('<' + letter, '/', '!' or '?') is kept as literal text, as is an
// unterminated tag.
inline std::string strip_html(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '<' && i + 1 < text.size()) {
      const char n = text[i + 1];
      const bool opens_tag = std::isalpha(static_cast<unsigned char>(n)) ||
                             n == '/' || n == '!' || n == '?';
      if (opens_tag) {
        if (text.compare(i, 4, "<!--") == 0) {
          const std::size_t end = text.find("-->", i + 4);
          if (end != std::string_view::npos) {
            out += ' ';
            i = end + 3;
            continue;
          }
        } else {
          std::size_t j = i + 1;
          char quote = 0;
          for (; j < text.size(); ++j) {
            if (quote) {
              if (text[j] == quote) quote = 0;
            } else if (text[j] == '"' || text[j] == '\'') {
              quote = text[j];
            } else if (text[j] == '>') {
              break;
            }
          }
          if (j < text.size()) {
            out += ' ';
            i = j + 1;
            continue;
          }
        }
      }
    }
    if (c == '&') {
      std::string decoded;
      std::size_t consumed = 0;
      if (detail::decode_entity(text, i, decoded, consumed)) {
        out += decoded;
        i += consumed;
        continue;
      }
    }
    out += c;
    ++i;
  }
  // Collapse whitespace runs and trim.
  std::string collapsed;
  collapsed.reserve(out.size());
  bool in_space = true;
  for (char c : out) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) collapsed += ' ';
      in_space = true;
    } else {
      collapsed += c;
      in_space = false;
    }
  }
  while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  return collapsed;
}

namespace detail {

// Porter suffix stripper (Porter, 1980), following the reference
// implementation including its two published departures (bli->ble,
// logi->log). Operates on a lowercase word.
class PorterStemmer {
 public:
  std::string stem(std::string word) {
    if (word.size() <= 2) return word;
    b_ = std::move(word);
    k_ = int(b_.size()) - 1;
    j_ = 0;
    step1ab();
    step1c();
    step2();
    step3();
    step4();
    step5();
    b_.resize(std::size_t(k_) + 1);
    return std::move(b_);
  }

 private:
  std::string b_;
  int k_ = 0;  // last index of current word
  int j_ = 0;  // general offset set by ends()

  bool cons(int i) const {
    switch (b_[std::size_t(i)]) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !cons(i - 1);
      default:
        return true;
    }
  }

  // Measure of b[0..j]: [C](VC){m}[V].
  int m() const {
    int n = 0, i = 0;
    while (true) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i)
      if (!cons(i)) return true;
    return false;
  }

  bool doublec(int j) const {
    if (j < 1) return false;
    if (b_[std::size_t(j)] != b_[std::size_t(j) - 1]) return false;
    return cons(j);
  }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char ch = b_[std::size_t(i)];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  bool ends(std::string_view s) {
    const int len = int(s.size());
    if (len > k_ + 1) return false;
    if (b_.compare(std::size_t(k_endpos(len)), std::size_t(len), s) != 0) return false;
    j_ = k_ - len;
    return true;
  }
  int k_endpos(int len) const { return k_ - len + 1; }

  void setto(std::string_view s) {
    b_.resize(std::size_t(j_) + 1);
    b_.append(s);
    k_ = j_ + int(s.size());
  }

  void r(std::string_view s) {
    if (m() > 0) setto(s);
  }

  void step1ab() {
    if (b_[std::size_t(k_)] == 's') {
      if (ends("sses")) k_ -= 2;
      else if (ends("ies")) setto("i");
      else if (b_[std::size_t(k_) - 1] != 's') --k_;
    }
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      if (ends("at")) setto("ate");
      else if (ends("bl")) setto("ble");
      else if (ends("iz")) setto("ize");
      else if (doublec(k_)) {
        --k_;
        const char ch = b_[std::size_t(k_)];
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else if (m() == 1 && cvc(k_)) {
        setto("e");
      }
    }
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[std::size_t(k_)] = 'i';
  }

  void step2() {
    if (k_ < 1) return;
    switch (b_[std::size_t(k_) - 1]) {
      case 'a':
        if (ends("ational")) { r("ate"); break; }
        if (ends("tional")) { r("tion"); break; }
        break;
      case 'c':
        if (ends("enci")) { r("ence"); break; }
        if (ends("anci")) { r("ance"); break; }
        break;
      case 'e':
        if (ends("izer")) { r("ize"); break; }
        break;
      case 'l':
        if (ends("bli")) { r("ble"); break; }
        if (ends("alli")) { r("al"); break; }
        if (ends("entli")) { r("ent"); break; }
        if (ends("eli")) { r("e"); break; }
        if (ends("ousli")) { r("ous"); break; }
        break;
      case 'o':
        if (ends("ization")) { r("ize"); break; }
        if (ends("ation")) { r("ate"); break; }
        if (ends("ator")) { r("ate"); break; }
        break;
      case 's':
        if (ends("alism")) { r("al"); break; }
        if (ends("iveness")) { r("ive"); break; }
        if (ends("fulness")) { r("ful"); break; }
        if (ends("ousness")) { r("ous"); break; }
        break;
      case 't':
        if (ends("aliti")) { r("al"); break; }
        if (ends("iviti")) { r("ive"); break; }
        if (ends("biliti")) { r("ble"); break; }
        break;
      case 'g':
        if (ends("logi")) { r("log"); break; }
        break;
      default:
        break;
    }
  }

  void step3() {
    switch (b_[std::size_t(k_)]) {
      case 'e':
        if (ends("icate")) { r("ic"); break; }
        if (ends("ative")) { r(""); break; }
        if (ends("alize")) { r("al"); break; }
        break;
      case 'i':
        if (ends("iciti")) { r("ic"); break; }
        break;
      case 'l':
        if (ends("ical")) { r("ic"); break; }
        if (ends("ful")) { r(""); break; }
        break;
      case 's':
        if (ends("ness")) { r(""); break; }
        break;
      default:
        break;
    }
  }

  void step4() {
    if (k_ < 1) return;
    bool matched = false;
    switch (b_[std::size_t(k_) - 1]) {
      case 'a': matched = ends("al"); break;
      case 'c': matched = ends("ance") || ends("ence"); break;
      case 'e': matched = ends("er"); break;
      case 'i': matched = ends("ic"); break;
      case 'l': matched = ends("able") || ends("ible"); break;
      case 'n': matched = ends("ant") || ends("ement") || ends("ment") || ends("ent"); break;
      case 'o':
        matched = (ends("ion") && j_ >= 0 &&
                   (b_[std::size_t(j_)] == 's' || b_[std::size_t(j_)] == 't')) ||
                  ends("ou");
        break;
      case 's': matched = ends("ism"); break;
      case 't': matched = ends("ate") || ends("iti"); break;
      case 'u': matched = ends("ous"); break;
      case 'v': matched = ends("ive"); break;
      case 'z': matched = ends("ize"); break;
      default: break;
    }
    if (matched && m() > 1) k_ = j_;
  }

  void step5() {
    j_ = k_;
    if (b_[std::size_t(k_)] == 'e') {
      const int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (b_[std::size_t(k_)] == 'l' && doublec(k_) && m() > 1) --k_;
  }
};

}  // namespace detail

// One pass of the suffix stripper. Not idempotent on its own.
inline std::string porter_stem(const std::string& word) {
  detail::PorterStemmer stemmer;
  return stemmer.stem(word);
}

// Normal form used for bags of words: the suffix stripper iterated to a
// fixpoint, which makes normalize(normalize(x)) == normalize(x) hold by
// construction. Input must already be lowercase.
inline std::string normalize(std::string word) {
  for (int guard = 0; guard < 16; ++guard) {
    std::string next = porter_stem(word);
    if (next == word) return word;
    word = std::move(next);
  }
  return word;
}

inline bool is_stop_word(const std::string& lowercase_token) {
  return detail::stop_words().count(lowercase_token) > 0;
}

// Splits on non-alphanumeric boundaries, lowercases, drops stop words (by
// surface and by base form, so no stop word can reach a bag of words) and
// normalizes each survivor.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::string current;
  auto flush = [&]() {
    if (current.empty()) return;
    std::string surface = lower_ascii(current);
    current.clear();
    if (is_stop_word(surface)) return;
    std::string base = normalize(surface);
    if (base.empty() || is_stop_word(base)) return;
    tokens.push_back(Token{std::move(surface), std::move(base)});
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current += c;
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

// Plain lowercase word split with no stop-word removal or normalization;
// the deep text encoders consume this form.
inline std::vector<std::string> simple_tokens(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current += c;
    } else if (!current.empty()) {
      words.push_back(lower_ascii(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(lower_ascii(current));
  return words;
}

inline BagOfWords to_bag(const std::vector<Token>& tokens) {
  BagOfWords bag;
  for (const auto& token : tokens) ++bag[token.base];
  return bag;
}

inline BagOfWords bag_of_words(std::string_view text) {
  return to_bag(tokenize(strip_html(text)));
}

// Retains terms with document frequency >= min_df, keeping the max_vocab
// highest-df terms; ties and index order are df-descending then
// lexicographic.
inline Dictionary build_dictionary(const std::vector<BagOfWords>& docs,
                                   int min_df, int max_vocab) {
  if (min_df < 1) throw UsageError("build_dictionary: min_df must be >= 1");
  if (max_vocab < 1) throw UsageError("build_dictionary: max_vocab must be >= 1");
  if (docs.empty()) throw DataError("build_dictionary: empty corpus");
  std::map<std::string, int> df;
  for (const auto& doc : docs)
    for (const auto& [term, count] : doc)
      if (count > 0) ++df[term];
  std::vector<std::pair<std::string, int>> kept;
  kept.reserve(df.size());
  for (auto& [term, freq] : df)
    if (freq >= min_df) kept.emplace_back(term, freq);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (int(kept.size()) > max_vocab) kept.resize(std::size_t(max_vocab));
  Dictionary dict;
  dict.terms.reserve(kept.size());
  dict.document_frequency.reserve(kept.size());
  for (int i = 0; i < int(kept.size()); ++i) {
    dict.terms.push_back(kept[std::size_t(i)].first);
    dict.document_frequency.push_back(kept[std::size_t(i)].second);
    dict.index.emplace(kept[std::size_t(i)].first, i);
  }
  return dict;
}

// One line per term: "index<TAB>term<TAB>document_frequency".
inline std::string serialize_dictionary(const Dictionary& dict) {
  std::string out;
  for (int i = 0; i < dict.size(); ++i) {
    out += std::to_string(i);
    out += '\t';
    out += dict.terms[std::size_t(i)];
    out += '\t';
    out += std::to_string(dict.document_frequency[std::size_t(i)]);
    out += '\n';
  }
  return out;
}

inline Dictionary parse_dictionary(std::string_view text) {
  Dictionary dict;
  int line_no = 0;
  for (const auto& line : split_string(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_string(line, '\t');
    if (fields.size() != 3)
      throw DataError("dictionary line " + std::to_string(line_no) +
                      ": expected 3 tab-separated fields");
    const int index = std::stoi(fields[0]);
    if (index != dict.size())
      throw DataError("dictionary line " + std::to_string(line_no) +
                      ": indices must be contiguous from 0");
    dict.terms.push_back(fields[1]);
    dict.document_frequency.push_back(std::stoi(fields[2]));
    dict.index.emplace(fields[1], index);
  }
  return dict;
}

}  // namespace cota::textprep
