#include "qrn/synth.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qrn/error.hpp"
#include "qrn/rng.hpp"

namespace qrn::synth {

namespace {

const std::array<const char*, 4> kActors = {"Mary", "John", "Daniel", "Sandra"};
const std::array<const char*, 6> kPlaces = {"bathroom", "hallway", "kitchen",
                                            "garden",   "office",  "bedroom"};
const std::array<const char*, 4> kMoveVerbs = {"moved to the", "went to the",
                                               "journeyed to the", "travelled to the"};
const std::array<const char*, 3> kObjects = {"football", "apple", "milk"};
const std::array<const char*, 3> kTakeVerbs = {"took the", "got the", "picked up the"};
const std::array<const char*, 3> kDropVerbs = {"dropped the", "discarded the",
                                               "put down the"};

constexpr int kNone = -1;

struct ActorState {
  int place = kNone;
  long last_move = 0;  // story line id of the latest movement
};

void qa_task1_story(std::ostringstream& out, Rng& rng) {
  std::array<ActorState, kActors.size()> actors{};
  long line = 0;
  int statements = 0;
  while (statements < 10) {
    const std::size_t a = rng.index(kActors.size());
    int place = static_cast<int>(rng.index(kPlaces.size()));
    while (place == actors[a].place) place = static_cast<int>(rng.index(kPlaces.size()));
    actors[a].place = place;
    actors[a].last_move = ++line;
    out << line << ' ' << kActors[a] << ' ' << kMoveVerbs[rng.index(kMoveVerbs.size())]
        << ' ' << kPlaces[place] << ".\n";
    if (++statements % 2 == 0) {
      std::size_t who = rng.index(kActors.size());
      while (actors[who].place == kNone) who = rng.index(kActors.size());
      out << ++line << " Where is " << kActors[who] << "?\t" << kPlaces[actors[who].place]
          << '\t' << actors[who].last_move << '\n';
    }
  }
}

void qa_task12_story(std::ostringstream& out, Rng& rng) {
  std::array<ActorState, kActors.size()> actors{};
  long line = 0;
  int statements = 0;
  while (statements < 10) {
    const std::size_t a = rng.index(kActors.size());
    std::size_t b = rng.index(kActors.size());
    while (b == a) b = rng.index(kActors.size());
    const int place = static_cast<int>(rng.index(kPlaces.size()));
    ++line;
    for (std::size_t who : {a, b}) {
      actors[who].place = place;
      actors[who].last_move = line;
    }
    out << line << ' ' << kActors[a] << " and " << kActors[b] << ' '
        << kMoveVerbs[rng.index(kMoveVerbs.size())] << ' ' << kPlaces[place] << ".\n";
    if (++statements % 2 == 0) {
      std::size_t who = rng.index(kActors.size());
      while (actors[who].place == kNone) who = rng.index(kActors.size());
      out << ++line << " Where is " << kActors[who] << "?\t" << kPlaces[actors[who].place]
          << '\t' << actors[who].last_move << '\n';
    }
  }
}

struct ObjectState {
  int holder = kNone;   // actor holding it, or
  int place = kNone;    // room it lies in; both kNone means not introduced yet
  long take_line = 0;
  long settle_line = 0;  // drop line when lying in a room
};

void qa_task2_story(std::ostringstream& out, Rng& rng) {
  std::array<ActorState, kActors.size()> actors{};
  std::array<ObjectState, kObjects.size()> objects{};
  long line = 0;

  auto determined = [&](const ObjectState& o) {
    if (o.place != kNone) return true;
    return o.holder != kNone && actors[o.holder].place != kNone;
  };
  auto emit_move = [&](std::size_t a) {
    int place = static_cast<int>(rng.index(kPlaces.size()));
    while (place == actors[a].place) place = static_cast<int>(rng.index(kPlaces.size()));
    actors[a].place = place;
    actors[a].last_move = ++line;
    out << line << ' ' << kActors[a] << ' ' << kMoveVerbs[rng.index(kMoveVerbs.size())]
        << ' ' << kPlaces[place] << ".\n";
  };
  auto emit_take = [&](std::size_t a, std::size_t o) {
    objects[o].holder = static_cast<int>(a);
    objects[o].place = kNone;
    objects[o].take_line = ++line;
    out << line << ' ' << kActors[a] << ' ' << kTakeVerbs[rng.index(kTakeVerbs.size())]
        << ' ' << kObjects[o] << ".\n";
  };
  auto emit_drop = [&](std::size_t a, std::size_t o) {
    objects[o].holder = kNone;
    objects[o].place = actors[a].place;
    objects[o].settle_line = ++line;
    out << line << ' ' << kActors[a] << ' ' << kDropVerbs[rng.index(kDropVerbs.size())]
        << ' ' << kObjects[o] << ".\n";
  };

  int statements = 0;
  while (statements < 15) {
    // Takes are restricted to located actors so a taken object stays
    // answerable; the first two statements guarantee one determined object.
    std::vector<std::pair<std::size_t, std::size_t>> takeable, droppable;
    for (std::size_t a = 0; a < kActors.size(); ++a) {
      if (actors[a].place == kNone) continue;
      for (std::size_t o = 0; o < kObjects.size(); ++o) {
        if (objects[o].holder == static_cast<int>(a))
          droppable.emplace_back(a, o);
        else if (objects[o].holder == kNone &&
                 (objects[o].place == kNone || objects[o].place == actors[a].place))
          takeable.emplace_back(a, o);
      }
    }
    const std::size_t roll = rng.index(10);
    const bool force_move = statements == 0 || (takeable.empty() && droppable.empty());
    const bool force_take = statements == 1;  // an early take keeps one object determined
    if (force_move || (!force_take && roll < 6)) {
      emit_move(rng.index(kActors.size()));
    } else if (!takeable.empty() && (force_take || roll < 8 || droppable.empty())) {
      auto [a, o] = takeable[rng.index(takeable.size())];
      emit_take(a, o);
    } else {  // droppable is nonempty here: an empty pair list forces a move above
      auto [a, o] = droppable[rng.index(droppable.size())];
      emit_drop(a, o);
    }
    if (++statements % 3 == 0) {
      std::vector<std::size_t> ready;
      for (std::size_t o = 0; o < kObjects.size(); ++o)
        if (determined(objects[o])) ready.push_back(o);
      if (ready.empty()) continue;  // cannot happen after statement 2
      const std::size_t o = ready[rng.index(ready.size())];
      int place;
      long support_a = objects[o].take_line, support_b;
      if (objects[o].place != kNone) {
        place = objects[o].place;
        support_b = objects[o].settle_line;
      } else {
        place = actors[objects[o].holder].place;
        support_b = actors[objects[o].holder].last_move;
      }
      if (support_a > support_b) std::swap(support_a, support_b);
      out << ++line << " Where is the " << kObjects[o] << "?\t" << kPlaces[place] << '\t'
          << support_a << ' ' << support_b << '\n';
    }
  }
}

// --- dialogs -----------------------------------------------------------------

const std::array<const char*, 6> kCuisines = {"british", "french",  "indian",
                                              "italian", "spanish", "vietnamese"};
const std::array<const char*, 6> kCities = {"bombay", "london", "madrid",
                                            "paris",  "rome",   "seoul"};
const std::array<const char*, 4> kPartySizes = {"two", "four", "six", "eight"};
const std::array<const char*, 3> kPriceRanges = {"cheap", "moderate", "expensive"};

const std::array<const char*, 3> kGreetings = {"hi", "hello", "good morning"};
const std::array<const char*, 4> kRequests = {
    "can you book a table", "can you make a restaurant reservation",
    "i'd like to book a table", "may i have a table"};

constexpr const char* kGreetReply = "hello what can i help you with today";
constexpr const char* kAck = "i'm on it";
constexpr const char* kLookup = "ok let me look into some options for you";
constexpr const char* kSilence = "<SILENCE>";
const std::array<const char*, 4> kSlotQuestions = {
    "any preference on a type of cuisine", "where should it be",
    "how many people would be in your party", "which price range are looking for"};

std::string slot_phrase(std::size_t slot, const std::array<std::string, 4>& v) {
  switch (slot) {
    case 0: return "with " + v[0] + " cuisine";
    case 1: return "in " + v[1];
    case 2: return "for " + v[2] + " people";
    default: return "in a " + v[3] + " price range";
  }
}

void dialog_story(std::ostringstream& out, Rng& rng) {
  const std::array<std::string, 4> values = {
      kCuisines[rng.index(kCuisines.size())], kCities[rng.index(kCities.size())],
      kPartySizes[rng.index(kPartySizes.size())],
      kPriceRanges[rng.index(kPriceRanges.size())]};

  std::array<bool, 4> given{};
  const std::size_t upfront = rng.index(5);  // 0..4 slots named in the request
  {
    std::vector<std::size_t> slots = {0, 1, 2, 3};
    rng.shuffle(slots);
    for (std::size_t i = 0; i < upfront; ++i) given[slots[i]] = true;
  }

  long n = 0;
  out << ++n << ' ' << kGreetings[rng.index(kGreetings.size())] << '\t' << kGreetReply
      << '\n';
  std::string request = kRequests[rng.index(kRequests.size())];
  for (std::size_t s = 0; s < 4; ++s)
    if (given[s]) request += " " + slot_phrase(s, values);
  out << ++n << ' ' << request << '\t' << kAck << '\n';

  std::string user = kSilence;
  for (std::size_t s = 0; s < 4; ++s) {
    if (given[s]) continue;
    out << ++n << ' ' << user << '\t' << kSlotQuestions[s] << '\n';
    user = slot_phrase(s, values);
  }
  out << ++n << ' ' << user << '\t' << kLookup << '\n';
  out << ++n << ' ' << kSilence << "\tapi_call " << values[0] << ' ' << values[1] << ' '
      << values[2] << ' ' << values[3] << '\n';
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write dataset file: " + path);
  out << text;
  if (!out.flush()) throw IoError("failed writing dataset file: " + path);
}

}  // namespace

std::string qa_text(int task, std::size_t stories, std::uint64_t seed) {
  std::ostringstream out;
  Rng rng(derive_seed(seed, 0x9A0 + static_cast<std::uint64_t>(task)));
  for (std::size_t s = 0; s < stories; ++s) {
    switch (task) {
      case 1: qa_task1_story(out, rng); break;
      case 2: qa_task2_story(out, rng); break;
      case 12: qa_task12_story(out, rng); break;
      default:
        throw InputError("no generator for QA task " + std::to_string(task));
    }
  }
  return out.str();
}

std::string dialog_text(std::size_t dialogs, std::uint64_t seed) {
  std::ostringstream out;
  Rng rng(derive_seed(seed, 0xD1A));
  for (std::size_t i = 0; i < dialogs; ++i) {
    if (i) out << '\n';
    dialog_story(out, rng);
  }
  return out.str();
}

std::string dialog_candidates_text() {
  std::ostringstream out;
  for (const char* fixed : {kGreetReply, kAck, kSlotQuestions[0], kSlotQuestions[1],
                            kSlotQuestions[2], kSlotQuestions[3], kLookup})
    out << "1 " << fixed << '\n';
  for (const char* c : kCuisines)
    for (const char* l : kCities)
      for (const char* p : kPartySizes)
        for (const char* r : kPriceRanges)
          out << "1 api_call " << c << ' ' << l << ' ' << p << ' ' << r << '\n';
  return out.str();
}

DatasetPaths write_qa_dataset(const std::string& dir, int task, std::size_t train_stories,
                              std::size_t test_stories, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const std::string t = std::to_string(task);
  DatasetPaths p;
  p.train = dir + "/qa" + t + "_train.txt";
  p.test = dir + "/qa" + t + "_test.txt";
  write_text_file(p.train, qa_text(task, train_stories, derive_seed(seed, 1)));
  write_text_file(p.test, qa_text(task, test_stories, derive_seed(seed, 2)));
  return p;
}

DatasetPaths write_dialog_dataset(const std::string& dir, std::size_t train_dialogs,
                                  std::size_t test_dialogs, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  DatasetPaths p;
  p.train = dir + "/dialog-babi-task1-synth-trn.txt";
  p.test = dir + "/dialog-babi-task1-synth-tst.txt";
  p.candidates = dir + "/dialog-babi-candidates.txt";
  write_text_file(p.train, dialog_text(train_dialogs, derive_seed(seed, 1)));
  write_text_file(p.test, dialog_text(test_dialogs, derive_seed(seed, 2)));
  write_text_file(p.candidates, dialog_candidates_text());
  return p;
}

}  // namespace qrn::synth
