//! Built-in English word list and lexicon file loading.

use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab;

/// Common lowercase English words, 3-8 characters.
const BUILTIN: &[&str] = &[
    "about", "above", "across", "action", "advice", "after", "again", "against", "agree",
    "almost", "alone", "along", "already", "always", "amount", "animal", "answer", "appear",
    "apple", "area", "argue", "around", "arrive", "artist", "attack", "author", "autumn",
    "avoid", "awake", "basket", "battle", "beach", "become", "before", "begin", "behind",
    "believe", "below", "beside", "better", "between", "beyond", "bird", "black", "blood",
    "board", "boat", "body", "bone", "book", "border", "bottle", "bottom", "branch", "brave",
    "bread", "break", "breath", "bridge", "bright", "bring", "broad", "brother", "brown",
    "build", "burn", "busy", "butter", "button", "cabin", "camera", "candle", "carbon",
    "career", "carry", "castle", "catch", "cattle", "cause", "center", "chain", "chair",
    "chance", "change", "charge", "chase", "cheap", "check", "cheese", "child", "choice",
    "choose", "circle", "city", "claim", "class", "clean", "clear", "climb", "clock", "close",
    "cloth", "cloud", "coast", "coffee", "cold", "collect", "color", "common", "consider",
    "contain", "control", "cook", "copper", "corner", "cost", "cotton", "count", "country",
    "course", "cover", "create", "credit", "cross", "crowd", "culture", "current", "curve",
    "custom", "damage", "dance", "danger", "dark", "debate", "decide", "deep", "degree",
    "deliver", "demand", "depend", "desert", "design", "detail", "develop", "device",
    "dinner", "direct", "discuss", "distance", "divide", "doctor", "dollar", "double",
    "doubt", "draw", "dream", "dress", "drink", "drive", "drop", "early", "earth", "east",
    "easy", "effect", "effort", "eight", "either", "electric", "emerge", "empty", "energy",
    "engine", "enjoy", "enough", "enter", "entire", "equal", "escape", "evening", "event",
    "every", "exact", "example", "except", "exist", "expect", "explain", "express", "extend",
    "face", "fact", "fail", "fall", "family", "famous", "fast", "father", "fear", "feature",
    "feel", "field", "fight", "figure", "fill", "final", "find", "finger", "finish", "fire",
    "first", "fish", "five", "flat", "floor", "flow", "flower", "follow", "food", "foot",
    "force", "forest", "forget", "form", "fortune", "forward", "four", "frame", "free",
    "fresh", "friend", "front", "fruit", "full", "future", "garden", "gather", "general",
    "gentle", "give", "glass", "goal", "gold", "good", "grand", "grass", "great", "green",
    "ground", "group", "grow", "guard", "guess", "guest", "guide", "hair", "half", "hand",
    "happen", "happy", "hard", "have", "head", "health", "hear", "heart", "heavy", "help",
    "here", "hide", "high", "hill", "history", "hold", "hole", "home", "hope", "horse",
    "hotel", "hour", "house", "human", "hundred", "hunt", "hurry", "idea", "image",
    "imagine", "import", "include", "income", "indeed", "inside", "instead", "iron",
    "island", "issue", "join", "journey", "judge", "jump", "just", "keep", "kind", "king",
    "kitchen", "knee", "knife", "know", "label", "labor", "lack", "lake", "land", "large",
    "last", "late", "laugh", "layer", "lead", "leaf", "learn", "leave", "left", "length",
    "less", "letter", "level", "life", "lift", "light", "like", "limit", "line", "list",
    "listen", "little", "live", "local", "long", "look", "lose", "loud", "love", "lower",
    "luck", "lunch", "machine", "main", "major", "make", "manage", "manner", "many", "map",
    "mark", "market", "master", "match", "matter", "maybe", "meal", "mean", "measure",
    "meat", "medium", "meet", "member", "memory", "mention", "metal", "method", "middle",
    "might", "mile", "milk", "mind", "mine", "minute", "mirror", "miss", "mister", "mix",
    "model", "modern", "moment", "money", "month", "moon", "more", "morning", "most",
    "mother", "motor", "mount", "mouth", "move", "movie", "much", "music", "must", "name",
    "narrow", "nation", "nature", "near", "neck", "need", "never", "news", "next", "nice",
    "night", "nine", "noise", "north", "nose", "note", "nothing", "notice", "number",
    "object", "ocean", "offer", "office", "often", "once", "only", "open", "order", "other",
    "outside", "over", "own", "page", "paint", "pair", "paper", "parent", "park", "part",
    "party", "pass", "past", "path", "pattern", "peace", "people", "period", "person",
    "phone", "phrase", "picture", "piece", "place", "plain", "plan", "plane", "plant",
    "plate", "play", "please", "point", "police", "poor", "popular", "position", "possible",
    "pound", "power", "prepare", "present", "press", "price", "print", "private", "problem",
    "process", "produce", "product", "program", "project", "protect", "prove", "provide",
    "public", "pull", "purpose", "push", "quality", "question", "quick", "quiet", "quite",
    "race", "radio", "rain", "raise", "range", "rate", "rather", "reach", "read", "ready",
    "real", "reason", "receive", "record", "reduce", "region", "relate", "remain",
    "remember", "remove", "repeat", "reply", "report", "require", "rest", "result",
    "return", "rich", "ride", "right", "ring", "rise", "river", "road", "rock", "roll",
    "room", "round", "rule", "run", "safe", "sail", "salt", "same", "sand", "save", "scale",
    "scene", "school", "science", "score", "search", "season", "seat", "second", "section",
    "seem", "sell", "send", "sense", "serve", "settle", "seven", "several", "shade",
    "shake", "shape", "share", "sharp", "shine", "ship", "shoe", "shop", "short", "should",
    "show", "side", "sign", "silent", "silver", "simple", "since", "sing", "single",
    "sister", "site", "six", "size", "skill", "skin", "sky", "sleep", "slide", "slow",
    "small", "smile", "smoke", "snow", "social", "soft", "soil", "soldier", "solid",
    "solve", "some", "song", "soon", "sort", "sound", "south", "space", "speak", "special",
    "speech", "speed", "spell", "spend", "spirit", "spite", "sport", "spot", "spread",
    "spring", "square", "stage", "stand", "star", "start", "state", "station", "stay",
    "steel", "step", "stick", "still", "stone", "stop", "store", "storm", "story",
    "straight", "strange", "stream", "street", "strike", "strong", "student", "study",
    "style", "subject", "succeed", "such", "sudden", "suffer", "sugar", "suggest",
    "summer", "supply", "support", "sure", "surface", "survive", "sweet", "swim", "system",
    "table", "take", "talk", "tall", "teach", "team", "tell", "term", "test", "text",
    "than", "thank", "their", "theory", "there", "thick", "thin", "thing", "think",
    "third", "this", "though", "thought", "three", "through", "throw", "thus", "time",
    "tiny", "today", "tone", "tool", "total", "touch", "toward", "town", "track", "trade",
    "train", "travel", "treat", "tree", "trip", "trouble", "true", "trust", "truth",
    "turn", "twelve", "twenty", "type", "under", "unit", "until", "upon", "urban", "use",
    "usual", "valley", "value", "various", "very", "view", "village", "visit", "voice",
    "wait", "walk", "wall", "want", "warm", "watch", "water", "wave", "weak", "wear",
    "weather", "week", "weight", "welcome", "well", "west", "wheel", "when", "where",
    "which", "while", "white", "whole", "wide", "wild", "will", "wind", "window", "winter",
    "wise", "wish", "with", "woman", "wonder", "wood", "word", "work", "world", "worry",
    "worth", "would", "write", "wrong", "yard", "year", "yellow", "yes", "young",
];

pub fn builtin_lexicon() -> Vec<String> {
    BUILTIN.iter().map(|s| s.to_string()).collect()
}

/// Load a lexicon file (one word per line, `#` comments), validating every
/// word against the render inventory.
pub fn load_lexicon_file(path: &Path, max_chars: usize) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read lexicon {}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for line in text.lines() {
        let word = line.trim();
        if word.is_empty() || word.starts_with('#') {
            continue;
        }
        vocab::validate_text(word, max_chars)
            .map_err(|e| Error::config(format!("lexicon word {word:?}: {e}")))?;
        if seen.insert(word.to_string()) {
            out.push(word.to_string());
        }
    }
    if out.len() < 2 {
        return Err(Error::config(format!(
            "lexicon {} needs at least 2 distinct words",
            path.display()
        )));
    }
    Ok(out)
}
