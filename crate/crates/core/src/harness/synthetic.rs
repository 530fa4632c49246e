//! Seeded stand-ins for the URL-feature table and the message corpus,
//! used when the real files are not available.

use crate::rng::SplitMix64;
use crate::url_features::{extract_lexical_features, FeatureSchema, Label, UrlFeatureVector};

use super::datasets::{TextDataset, UrlDataset};

const WORDS: [&str; 40] = [
    "garden", "river", "maple", "harbor", "summit", "atlas", "cobalt", "meadow", "orbit", "pixel",
    "nimbus", "cedar", "lumen", "quartz", "willow", "falcon", "tundra", "ember", "canyon", "delta",
    "prairie", "lantern", "beacon", "juniper", "marble", "copper", "violet", "saffron", "glacier",
    "aurora", "pepper", "basil", "otter", "heron", "coral", "fjord", "mesa", "sierra", "pine",
    "lotus",
];
const SAFE_TLDS: [&str; 6] = ["com", "org", "net", "edu", "io", "co"];
const PAGES: [&str; 16] = [
    "about", "docs", "blog", "news", "events", "contact", "catalog", "gallery", "team", "careers",
    "guides", "recipes", "projects", "archive", "help", "faq",
];
const LURE_WORDS: [&str; 12] = [
    "login",
    "signin",
    "verify",
    "secure",
    "account",
    "update",
    "confirm",
    "wp",
    "admin",
    "includes",
    "myaccount",
    "webscr",
];
const BRANDS: [&str; 8] = [
    "paypal",
    "apple",
    "microsoft",
    "amazon",
    "netflix",
    "chase",
    "dropbox",
    "outlook",
];
const BAD_TLDS: [&str; 6] = ["tk", "xyz", "top", "ml", "ga", "cf"];
const SHORTENERS: [&str; 3] = ["bit.ly", "goo.gl", "tinyurl.com"];

fn word(rng: &mut SplitMix64) -> &'static str {
    rng.choose(&WORDS)
}

fn legit_url(rng: &mut SplitMix64) -> String {
    let scheme = if rng.chance(0.7) { "https" } else { "http" };
    let host = match rng.below(5) {
        0 => format!("www.{}.{}", word(rng), rng.choose(&SAFE_TLDS)),
        1 => format!("{}.{}", word(rng), rng.choose(&SAFE_TLDS)),
        2 => format!("{}{}.{}", word(rng), word(rng), rng.choose(&SAFE_TLDS)),
        3 => format!(
            "{}.{}.{}",
            rng.choose(&PAGES),
            word(rng),
            rng.choose(&SAFE_TLDS)
        ),
        _ => format!("localhost:{}", 1024 + rng.below(60_000)),
    };
    let mut path = String::new();
    for _ in 0..rng.below(4) {
        path.push('/');
        if rng.chance(0.3) {
            path.push_str(&format!("{}-{}", word(rng), rng.choose(&PAGES)));
        } else {
            path.push_str(rng.choose(&PAGES));
        }
    }
    if rng.chance(0.5) {
        path.push('/');
    } else if rng.chance(0.3) {
        path.push_str("/index.html");
    }
    if rng.chance(0.1) {
        path.push_str(&format!("?page={}", rng.below(20)));
    }
    format!("{scheme}://{host}{path}")
}

fn random_token(rng: &mut SplitMix64, len: usize) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..len)
        .map(|_| ALPHABET[rng.below(ALPHABET.len())] as char)
        .collect()
}

fn phishing_url(rng: &mut SplitMix64) -> String {
    let scheme = if rng.chance(0.6) { "http" } else { "https" };
    let brand = *rng.choose(&BRANDS);
    let host = match rng.below(6) {
        0 => format!(
            "{}.{}.{}.{}",
            1 + rng.below(254),
            rng.below(256),
            rng.below(256),
            1 + rng.below(254)
        ),
        1 => format!(
            "{brand}.com.{}-{}.{}",
            rng.choose(&LURE_WORDS),
            word(rng),
            rng.choose(&BAD_TLDS)
        ),
        2 => format!(
            "{}-{brand}-{}.{}",
            rng.choose(&LURE_WORDS),
            rng.choose(&LURE_WORDS),
            rng.choose(&SAFE_TLDS)
        ),
        3 => rng.choose(&SHORTENERS).to_string(),
        4 => format!(
            "{}.{}",
            {
                let len = 12 + rng.below(10);
                random_token(rng, len)
            },
            rng.choose(&BAD_TLDS)
        ),
        _ => format!(
            "www.{}{}.{}",
            word(rng),
            10 + rng.below(990),
            rng.choose(&BAD_TLDS)
        ),
    };
    let mut path = String::new();
    for _ in 0..1 + rng.below(4) {
        path.push('/');
        path.push_str(
            match rng.below(3) {
                0 => rng.choose(&LURE_WORDS).to_string(),
                1 => {
                    let len = 4 + rng.below(20);
                    random_token(rng, len)
                }
                _ => format!("{}_{}", rng.choose(&LURE_WORDS), rng.below(10_000)),
            }
            .as_str(),
        );
    }
    if rng.chance(0.3) {
        path.push_str(".php");
    }
    if rng.chance(0.5) {
        path.push_str(&format!(
            "?session={}&{}={}",
            random_token(rng, 16),
            rng.choose(&LURE_WORDS),
            rng.below(100_000)
        ));
    }
    if rng.chance(0.15) {
        path.push_str(&format!("//http://{brand}.com"));
    }
    let prefix = if rng.chance(0.1) {
        format!("{brand}@")
    } else {
        String::new()
    };
    format!("{scheme}://{prefix}{host}{path}")
}

/// Value for a column that cannot be computed from the URL string.
fn offline_value(name: &str, phishing: bool, rng: &mut SplitMix64) -> f64 {
    let p = phishing;
    let flag = |rng: &mut SplitMix64, legit: f64, phish: f64| {
        rng.chance(if p { phish } else { legit }) as u8 as f64
    };
    let ratio = |rng: &mut SplitMix64, legit: f64, phish: f64| {
        let centre = if p { phish } else { legit };
        (centre + rng.uniform(-0.3, 0.3)).clamp(0.0, 1.0)
    };
    match name {
        "nb_hyperlinks" => {
            (if p {
                rng.below(60)
            } else {
                20 + rng.below(250)
            }) as f64
        }
        "nb_extCSS" => rng.below(if p { 2 } else { 5 }) as f64,
        "ratio_intHyperlinks" | "safe_anchor" | "ratio_intMedia" => ratio(rng, 0.7, 0.35),
        "ratio_extHyperlinks" | "ratio_nullHyperlinks" | "ratio_extMedia" | "links_in_tags" => {
            ratio(rng, 0.3, 0.55)
        }
        "ratio_intRedirection" | "ratio_extRedirection" | "ratio_intErrors" | "ratio_extErrors" => {
            ratio(rng, 0.1, 0.25)
        }
        "domain_registration_length" => {
            (if p {
                rng.below(400)
            } else {
                100 + rng.below(3000)
            }) as f64
        }
        "domain_age" => {
            if rng.chance(0.05) {
                -1.0
            } else {
                (if p {
                    rng.below(2000)
                } else {
                    500 + rng.below(9000)
                }) as f64
            }
        }
        "web_traffic" => {
            (if p {
                rng.below(50_000)
            } else {
                rng.below(5_000_000)
            }) as f64
        }
        "page_rank" => rng.below(if p { 4 } else { 10 }) as f64,
        "login_form" | "submit_email" | "iframe" | "popup_window" | "onmouseover"
        | "right_clic" | "empty_title" => flag(rng, 0.1, 0.35),
        "external_favicon"
        | "sfh"
        | "random_domain"
        | "nb_external_redirection"
        | "statistical_report" => flag(rng, 0.15, 0.4),
        "domain_in_title" | "domain_with_copyright" => flag(rng, 0.3, 0.6),
        "whois_registered_domain" | "dns_record" => flag(rng, 0.05, 0.25),
        "google_index" => flag(rng, 0.1, 0.8),
        _ => rng.below(10) as f64,
    }
}

/// Balanced table in the reference 87-column layout. Lexical columns are
/// extracted from generated URL strings; the other columns are drawn from
/// label-dependent ranges. `label_noise` of the rows get the opposite label.
pub fn synthetic_url_dataset(n: usize, label_noise: f64, seed: u64) -> UrlDataset {
    let schema = FeatureSchema::reference();
    let mut rng = SplitMix64::new(seed);
    let mut vectors = Vec::with_capacity(n);
    let mut urls = Vec::with_capacity(n);
    for i in 0..n {
        let phishing = i % 2 == 1;
        let url = if phishing {
            phishing_url(&mut rng)
        } else {
            legit_url(&mut rng)
        };
        let extraction = extract_lexical_features(&url, &schema).expect("generated URLs parse");
        let mut values = extraction.vector.values;
        for &slot in &extraction.imputed {
            values[slot] = offline_value(&schema.entries[slot].name, phishing, &mut rng);
        }
        let label = Label::from_bool(phishing != rng.chance(label_noise));
        vectors.push(UrlFeatureVector::new(values, Some(label)));
        urls.push(url);
    }
    UrlDataset {
        schema,
        vectors,
        urls: Some(urls),
    }
}

/// Credential-urgency phrases shared with the fixture builder.
pub const PHISH_OPENERS: [&str; 8] = [
    "URGENT",
    "Security alert",
    "Final notice",
    "Action required",
    "Important account notice",
    "Warning",
    "Attention customer",
    "Account team",
];
pub const PHISH_CLAIMS: [&str; 10] = [
    "your account has been suspended",
    "we detected unusual sign in activity on your account",
    "your password expires today",
    "your bank card has been locked",
    "your mailbox storage is full and incoming mail is on hold",
    "your payment was declined and your subscription is on hold",
    "a refund of 250 dollars is waiting for you",
    "you have won a cash prize of 1000 pounds",
    "your parcel could not be delivered and is held at the depot",
    "your tax refund has been approved",
];
pub const PHISH_ACTIONS: [&str; 10] = [
    "verify your password immediately",
    "confirm your login details now",
    "click the secure link to restore access",
    "sign in and update your billing information",
    "enter your card number and pin to unlock your account",
    "reply with your username and password",
    "call our claims line now to claim your reward",
    "log in within 24 hours to confirm your identity",
    "validate your account credentials using the form",
    "submit your security code to release the payment",
];
pub const PHISH_THREATS: [&str; 6] = [
    "or your account will be closed permanently",
    "failure to act will result in suspension",
    "this offer expires tonight",
    "access will be revoked within 24 hours",
    "otherwise all funds will be frozen",
    "do not ignore this final warning",
];

pub const BENIGN_SENTENCES: [&str; 24] = [
    "are we still on for lunch tomorrow",
    "running late be there in ten minutes",
    "can you pick up some milk on the way home",
    "thanks for dinner last night it was lovely",
    "the meeting moved to thursday afternoon",
    "happy birthday hope you have a great day",
    "i will call you after work",
    "did you watch the match last night",
    "the library is open until eight on weekdays",
    "new books arrived in the catalog this week",
    "the reading group meets every second monday",
    "our garden club is planting tulips this weekend",
    "the museum has a new exhibition on local history",
    "sorry i missed your call what's up",
    "see you at the station at six",
    "mum says dinner is at seven",
    "the weather looks nice for a walk in the park",
    "please bring your own cup to the picnic",
    "the school concert starts at half past five",
    "we are out of coffee can you grab some",
    "the bus was late again this morning",
    "let me know when you get home safe",
    "photos from the trip are in the shared album",
    "the community centre offers free yoga on fridays",
];
const HAM_OPENERS: [&str; 8] = [
    "hey",
    "hi",
    "ok",
    "sorry",
    "good morning",
    "lol",
    "hello",
    "yo",
];
const HAM_CLOSERS: [&str; 6] = [
    "see you",
    "cheers",
    "love you",
    "talk soon",
    "thanks",
    "bye",
];

pub(crate) fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// One credential-urgency message assembled from the phrase pools.
pub fn phishing_message(rng: &mut SplitMix64) -> String {
    let mut s = format!(
        "{}: {}. {}",
        rng.choose(&PHISH_OPENERS),
        capitalized(rng.choose(&PHISH_CLAIMS)),
        capitalized(rng.choose(&PHISH_ACTIONS))
    );
    if rng.chance(0.6) {
        s += &format!(" {}", rng.choose(&PHISH_THREATS));
    }
    s.push('.');
    if rng.chance(0.4) {
        s += &format!(
            " Visit http://{}.{}/{}",
            random_token(rng, 6),
            rng.choose(&BAD_TLDS),
            random_token(rng, 5)
        );
    }
    s
}

pub fn benign_message(rng: &mut SplitMix64) -> String {
    let mut s = String::new();
    if rng.chance(0.5) {
        s += &format!("{} ", rng.choose(&HAM_OPENERS));
    }
    s += rng.choose(&BENIGN_SENTENCES);
    if rng.chance(0.4) {
        s += &format!(", {}", rng.choose(&BENIGN_SENTENCES));
    }
    if rng.chance(0.3) {
        s += &format!(" {}", rng.choose(&HAM_CLOSERS));
    }
    if rng.chance(0.2) {
        s += &format!(" {}", WORDS[rng.below(WORDS.len())]);
    }
    s
}

/// Message corpus with `n` rows, about `spam_share` of them spam. Some
/// spam rows open with an ordinary sentence before the lure, and about
/// 7% of rows repeat an earlier message.
pub fn synthetic_text_dataset(n: usize, spam_share: f64, seed: u64) -> TextDataset {
    let mut rng = SplitMix64::new(seed);
    let mut messages: Vec<(String, Label)> = Vec::with_capacity(n);
    while messages.len() < n {
        if !messages.is_empty() && rng.chance(0.07) {
            let earlier = messages[rng.below(messages.len())].clone();
            messages.push(earlier);
            continue;
        }
        let spam = rng.chance(spam_share);
        let text = if spam {
            if rng.chance(0.3) {
                format!(
                    "{}. {}",
                    capitalized(rng.choose(&BENIGN_SENTENCES)),
                    phishing_message(&mut rng)
                )
            } else {
                phishing_message(&mut rng)
            }
        } else {
            benign_message(&mut rng)
        };
        messages.push((text, Label::from_bool(spam)));
    }
    TextDataset { messages }
}
