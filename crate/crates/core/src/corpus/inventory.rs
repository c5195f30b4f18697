//! Built-in domain inventories and the matching confusion tables.

use std::collections::BTreeMap;

use super::{ConfusionTable, CorpusConfig, DomainSpec, IntentSpec, NoiseModel};

fn intent(name: &str, templates: &[&str]) -> IntentSpec {
    IntentSpec {
        name: name.to_string(),
        templates: templates.iter().map(|t| t.to_string()).collect(),
    }
}

fn domain(name: &str, count: usize, intents: Vec<IntentSpec>) -> DomainSpec {
    DomainSpec {
        name: name.to_string(),
        count,
        intents,
    }
}

fn lexicons(entries: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    entries
        .iter()
        .map(|(k, vs)| (k.to_string(), vs.iter().map(|v| v.to_string()).collect()))
        .collect()
}

const SONGS: &[&str] = &[
    "yellow",
    "halo",
    "thriller",
    "hello",
    "imagine",
    "vogue",
    "roxanne",
    "jolene",
    "respect",
    "believer",
    "firework",
    "wonderwall",
];
const ARTISTS: &[&str] = &[
    "prince", "cher", "sting", "pink", "kiss", "journey", "madonna", "adele", "drake", "queen", "nelson", "shakira",
];
const ITEMS: &[&str] = &[
    "jello",
    "filler",
    "prints",
    "chairs",
    "string",
    "ink",
    "kits",
    "pears",
    "rice",
    "dahlias",
    "corks",
    "beads",
    "apples",
    "milk",
    "coffee",
    "paper towels",
];
const QUANTITIES: &[&str] = &["one", "two", "three", "four", "a dozen", "a pack of"];
const CITIES: &[&str] = &[
    "hilo", "jersey", "paris", "nice", "dallas", "cork", "leeds", "naples", "denver", "boston", "berlin", "madrid",
];
const DATES: &[&str] = &["today", "tomorrow", "tonight", "on monday", "this weekend", "on friday"];

/// Music, Shopping and Weather. Several carrier phrases are shared across
/// domains, so the slot value often decides the domain.
pub fn default_config() -> CorpusConfig {
    CorpusConfig {
        domains: vec![
            domain(
                "Music",
                300,
                vec![
                    intent(
                        "PlaySongIntent",
                        &[
                            "play {SongName}",
                            "play {SongName} by {ArtistName}",
                            "i want {SongName}",
                            "{SongName} please",
                        ],
                    ),
                    intent(
                        "PlayArtistIntent",
                        &[
                            "play some {ArtistName}",
                            "i want {ArtistName}",
                            "what about {ArtistName}",
                        ],
                    ),
                    intent(
                        "AddToPlaylistIntent",
                        &["add {SongName} to my list", "save {SongName} for later"],
                    ),
                ],
            ),
            domain(
                "Shopping",
                300,
                vec![
                    intent(
                        "BuyItemIntent",
                        &[
                            "buy {Item}",
                            "order {Quantity} {Item}",
                            "i want {Item}",
                            "{Item} please",
                        ],
                    ),
                    intent(
                        "AddToCartIntent",
                        &[
                            "add {Item} to my list",
                            "put {Item} in my cart",
                            "save {Item} for later",
                        ],
                    ),
                    intent(
                        "CheckOrderIntent",
                        &["where is my {Item}", "what about my {Item} order"],
                    ),
                ],
            ),
            domain(
                "Weather",
                300,
                vec![
                    intent(
                        "GetWeatherIntent",
                        &[
                            "what is the weather in {City}",
                            "what about {City}",
                            "{City} {Date}",
                            "{City} please",
                        ],
                    ),
                    intent(
                        "RainCheckIntent",
                        &[
                            "will it rain in {City}",
                            "is it going to rain {Date}",
                            "i want {City} rain",
                        ],
                    ),
                    intent(
                        "TemperatureIntent",
                        &["how hot is it in {City}", "temperature in {City} {Date}"],
                    ),
                ],
            ),
        ],
        lexicons: lexicons(&[
            ("SongName", SONGS),
            ("ArtistName", ARTISTS),
            ("Item", ITEMS),
            ("Quantity", QUANTITIES),
            ("City", CITIES),
            ("Date", DATES),
        ]),
    }
}

/// The default domains at 100 utterances each.
pub fn toy_config() -> CorpusConfig {
    default_config().with_count(100)
}

/// A single Music domain with three intents and two slot labels.
pub fn toy_music_config() -> CorpusConfig {
    CorpusConfig {
        domains: vec![domain(
            "Music",
            300,
            vec![
                intent(
                    "PlaySongIntent",
                    &["play {SongName}", "play {SongName} by {ArtistName}"],
                ),
                intent("PlayArtistIntent", &["play some {ArtistName}", "put on {ArtistName}"]),
                intent("PauseIntent", &["pause the music", "stop playing", "pause"]),
            ],
        )],
        lexicons: lexicons(&[("SongName", SONGS), ("ArtistName", ARTISTS)]),
    }
}

/// Near-homophones for the built-in vocabularies, including splits,
/// merges and a few confusions that land in another domain's vocabulary.
pub fn default_confusions() -> ConfusionTable {
    ConfusionTable::from_pairs(&[
        // near-homophones across domains
        ("yellow", &["jello", "yell oh"]),
        ("jello", &["yellow", "hello"]),
        ("halo", &["hilo", "hello"]),
        ("hilo", &["halo", "high low"]),
        ("hello", &["halo", "jello"]),
        ("thriller", &["filler", "chiller"]),
        ("filler", &["thriller", "fill her"]),
        ("prince", &["prints", "print"]),
        ("prints", &["prince", "print"]),
        ("cher", &["chairs", "share"]),
        ("chairs", &["cher", "shares"]),
        ("sting", &["string", "stink"]),
        ("string", &["sting", "strings"]),
        ("pink", &["ink", "pick"]),
        ("ink", &["pink", "inc"]),
        ("kiss", &["kits", "kids"]),
        ("kits", &["kiss", "kids"]),
        ("journey", &["jersey", "journal"]),
        ("jersey", &["journey", "jersey's"]),
        ("paris", &["pears", "pairs"]),
        ("pears", &["paris", "pairs"]),
        ("nice", &["rice", "mice"]),
        ("rice", &["nice", "price"]),
        ("dallas", &["dahlias", "dollars"]),
        ("dahlias", &["dallas", "dollars"]),
        ("cork", &["corks", "fork"]),
        ("corks", &["cork", "forks"]),
        ("leeds", &["beads", "needs"]),
        ("beads", &["leeds", "beats"]),
        ("naples", &["apples", "maples"]),
        ("apples", &["naples", "a pulse"]),
        // within a domain
        ("nelson", &["my son", "nelsen"]),
        ("madonna", &["mad owner", "madona"]),
        ("adele", &["a dell", "idle"]),
        ("drake", &["break", "drape"]),
        ("queen", &["green", "cream"]),
        ("shakira", &["sure kira"]),
        ("imagine", &["a machine"]),
        ("vogue", &["vague"]),
        ("roxanne", &["rocks and"]),
        ("jolene", &["cho lean"]),
        ("respect", &["a spec", "inspect"]),
        ("believer", &["be leaver"]),
        ("firework", &["fire work"]),
        ("wonderwall", &["wonder wall"]),
        ("milk", &["mink", "mill"]),
        ("coffee", &["toffee", "coughing"]),
        ("paper", &["pepper", "caper"]),
        ("towels", &["towers", "vowels"]),
        ("denver", &["then for"]),
        ("boston", &["bossed on"]),
        ("berlin", &["burling"]),
        ("madrid", &["mad rid"]),
        ("dozen", &["does in"]),
        ("tomorrow", &["to borrow", "tomato"]),
        ("tonight", &["to night"]),
        ("today", &["to day"]),
        ("monday", &["one day", "sunday"]),
        ("weekend", &["week and"]),
        ("friday", &["fried a"]),
        // carriers
        ("play", &["pray", "ply", "pay", "plate"]),
        ("some", &["sum"]),
        ("want", &["won't", "wand"]),
        ("please", &["police", "pleas"]),
        ("about", &["a bout"]),
        ("add", &["at", "ad"]),
        ("save", &["safe"]),
        ("list", &["lest", "last"]),
        ("later", &["letter", "ladder"]),
        ("buy", &["by", "bye"]),
        ("order", &["border", "older"]),
        ("put", &["but"]),
        ("cart", &["card", "car"]),
        ("where", &["wear", "were"]),
        ("weather", &["whether", "feather"]),
        ("rain", &["reign", "ran"]),
        ("hot", &["hat", "hut"]),
        ("temperature", &["temper chair"]),
        ("going", &["growing"]),
        // function words
        ("the", &["a", "uh"]),
        ("my", &["by", "me"]),
        ("in", &["and", "an"]),
        ("is", &["as", "his"]),
        ("to", &["two", "too"]),
        ("for", &["four", "far"]),
        ("it", &["at"]),
        ("what", &["watt"]),
        ("how", &["who"]),
        // merges
        ("who is", &["whose"]),
        ("to my", &["tummy"]),
        ("it in", &["eaten"]),
        ("is it", &["isn't"]),
        ("for later", &["formulator"]),
    ])
}

pub fn default_insertions() -> Vec<String> {
    ["uh", "um", "the", "a", "and", "please"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// The default noisy channel (roughly one utterance in five mismatched at
/// rank 1).
pub fn default_noise() -> NoiseModel {
    NoiseModel {
        sub: 0.03,
        del: 0.01,
        ins: 0.01,
        confusions: default_confusions(),
        insertions: default_insertions(),
        lambda: 0.5,
        rank_noise: 0.05,
        alt_scale: 3.0,
        samples: 12,
    }
}
