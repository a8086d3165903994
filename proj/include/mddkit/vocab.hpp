// Phone inventory with the reserved symbols used across the recognizer.
// Unified id space: 0 = blank (CTC only), 1..U = phones, U+1 = sos, U+2 = eos.
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mddkit/common.hpp"

namespace mddkit {

class PhoneVocab {
 public:
  static constexpr int kBlankId = 0;

  explicit PhoneVocab(std::vector<std::string> phones) : phones_(std::move(phones)) {
    if (phones_.empty()) throw ConfigError("phone vocabulary is empty");
    for (int i = 0; i < int(phones_.size()); ++i) {
      auto [it, inserted] = index_.emplace(phones_[i], i + 1);
      if (!inserted) throw ConfigError("duplicate phone symbol: " + phones_[i]);
    }
  }

  int size() const { return int(phones_.size()); }  // |U|
  int sos_id() const { return size() + 1; }
  int eos_id() const { return size() + 2; }

  bool is_phone(int id) const { return id >= 1 && id <= size(); }

  int id(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) throw InputError("unknown phone symbol: " + symbol);
    return it->second;
  }

  bool contains(const std::string& symbol) const { return index_.count(symbol) != 0; }

  const std::string& symbol(int id) const {
    if (!is_phone(id)) throw ContractError("id " + std::to_string(id) + " is not a phone");
    return phones_[id - 1];
  }

  const std::vector<std::string>& phones() const { return phones_; }

  // Decoder output slots: 0..U-1 are phones (slot = id - 1), U is eos.
  int num_decoder_slots() const { return size() + 1; }
  int eos_slot() const { return size(); }
  int slot_of(int phone_id) const {
    if (!is_phone(phone_id)) throw ContractError("slot_of: not a phone id");
    return phone_id - 1;
  }

  // CTC classes: 0 is blank, 1..U are the phones (same as vocab ids).
  int num_ctc_classes() const { return size() + 1; }

  std::vector<int> ids(const std::vector<std::string>& symbols) const {
    std::vector<int> out;
    out.reserve(symbols.size());
    for (const auto& s : symbols) out.push_back(id(s));
    return out;
  }

  std::vector<std::string> symbols(const std::vector<int>& ids_in) const {
    std::vector<std::string> out;
    out.reserve(ids_in.size());
    for (int i : ids_in) out.push_back(symbol(i));
    return out;
  }

  // The 39-phone CMU inventory, supported as a symbol table.
  static PhoneVocab cmu39() {
    return PhoneVocab({"AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH",
                       "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",
                       "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH",
                       "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"});
  }

 private:
  std::vector<std::string> phones_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace mddkit
