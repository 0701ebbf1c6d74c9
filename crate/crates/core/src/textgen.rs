//! Seeded sampler of synthetic standard-Persian sentences. It exists so the
//! whole pipeline (generate → train → evaluate) can run self-contained when
//! no real monolingual corpus is at hand; swap in real text for serious use.
//!
//! Sentences are template-based with person agreement between subject
//! pronouns and verb endings, over a vocabulary chosen to exercise the
//! conversion rules densely (word-final ان, copulas, case markers, plurals,
//! conjugated verbs).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZWNJ: char = '\u{200C}';

const PRONOUNS: [&str; 6] = ["من", "تو", "او", "ما", "شما", "آنها"];
const PRESENT_ENDINGS: [&str; 6] = ["م", "ی", "د", "یم", "ید", "ند"];
const PAST_ENDINGS: [&str; 6] = ["م", "ی", "", "یم", "ید", "ند"];

/// (present stem, past stem, takes a را object, usable in subjunctive)
const VERBS: [(&str, &str, bool, bool); 19] = [
    ("رو", "رفت", false, true),
    ("گوی", "گفت", true, true),
    ("خواه", "خواست", true, false),
    ("بین", "دید", true, true),
    ("خور", "خورد", true, true),
    ("کن", "کرد", true, true),
    ("شو", "شد", false, true),
    ("دان", "دانست", true, true),
    ("توان", "توانست", false, false),
    ("مان", "ماند", false, true),
    ("گذار", "گذاشت", true, true),
    ("خر", "خرید", true, true),
    ("خوان", "خواند", true, true),
    ("نویس", "نوشت", true, true),
    ("زن", "زد", true, true),
    ("بر", "برد", true, true),
    ("ده", "داد", true, true),
    ("نشین", "نشست", false, true),
    ("ایست", "ایستاد", false, false),
];

const NOUNS_AN: [&str; 14] = [
    "تهران", "زمان", "آسمان", "باران", "خیابان", "دندان", "مهمان", "داستان",
    "زبان", "میدان", "ایران", "انسان", "فنجان", "نان",
];

const NOUNS: [&str; 34] = [
    "کتاب", "خانه", "دوست", "مرد", "زن", "بچه", "شهر", "دست", "روز", "شب",
    "آب", "غذا", "کار", "درس", "مدرسه", "دانشگاه", "ماشین", "درخت", "گل",
    "باغ", "زمین", "دریا", "کوه", "صدا", "حرف", "فکر", "دل", "راه", "در",
    "پنجره", "میز", "صندلی", "لباس", "پول",
];

const ADJECTIVES: [&str; 20] = [
    "خوب", "بد", "بزرگ", "کوچک", "زیبا", "قشنگ", "کم", "زیاد", "گرم", "سرد",
    "تازه", "جوان", "پیر", "آسان", "سخت", "شیرین", "تلخ", "روشن", "تاریک", "آرام",
];

const ADVERBS: [&str; 7] = ["امروز", "دیروز", "فردا", "همیشه", "اکنون", "آنجا", "اینجا"];

/// Deterministic sentence sampler.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn pick<'a>(&mut self, items: &'a [&'a str]) -> &'a str {
        items[self.rng.gen_range(0..items.len())]
    }

    fn verb_index(&mut self, needs_object: Option<bool>, subjunctive: bool) -> usize {
        loop {
            let i = self.rng.gen_range(0..VERBS.len());
            let (_, _, transitive, subj_ok) = VERBS[i];
            if subjunctive && !subj_ok {
                continue;
            }
            if let Some(wants) = needs_object {
                if transitive != wants {
                    continue;
                }
            }
            return i;
        }
    }

    fn present(&mut self, person: usize, negated: bool, object: Option<bool>) -> String {
        let i = self.verb_index(object, false);
        let prefix = if negated { "نمی" } else { "می" };
        format!("{prefix}{ZWNJ}{}{}", VERBS[i].0, PRESENT_ENDINGS[person])
    }

    fn past(&mut self, person: usize, object: Option<bool>) -> String {
        let i = self.verb_index(object, false);
        format!("{}{}", VERBS[i].1, PAST_ENDINGS[person])
    }

    fn subjunctive(&mut self, person: usize) -> String {
        let i = self.verb_index(None, true);
        format!("ب{}{}", VERBS[i].0, PRESENT_ENDINGS[person])
    }

    fn noun(&mut self) -> &'static str {
        if self.rng.gen_bool(0.35) {
            NOUNS_AN[self.rng.gen_range(0..NOUNS_AN.len())]
        } else {
            NOUNS[self.rng.gen_range(0..NOUNS.len())]
        }
    }

    fn plural(&mut self) -> String {
        format!("{}{ZWNJ}ها", self.noun())
    }

    fn end(&mut self) -> &'static str {
        match self.rng.gen_range(0..10) {
            0 => "؟",
            1 => "!",
            _ => ".",
        }
    }

    /// One standard-register sentence.
    pub fn sentence(&mut self) -> String {
        let person = self.rng.gen_range(0..6);
        let pron = PRONOUNS[person];
        let other = PRONOUNS[(person + self.rng.gen_range(1..6)) % 6];
        let template = self.rng.gen_range(0..14);
        let mut tokens: Vec<String> = Vec::new();
        match template {
            0 => {
                tokens.extend([pron.into(), self.noun().into(), "را".into()]);
                tokens.push(self.past(person, Some(true)));
            }
            1 => {
                tokens.extend([self.noun().into(), self.pick(&ADJECTIVES).into(), "است".into()]);
            }
            2 => {
                let n = NOUNS_AN[self.rng.gen_range(0..NOUNS_AN.len())];
                tokens.extend([n.into(), self.pick(&ADJECTIVES).into(), "است".into()]);
            }
            3 => {
                tokens.extend([pron.into(), "به".into(), other.into(), self.noun().into()]);
                tokens.push(self.past(person, Some(true)));
            }
            4 => {
                tokens.extend([self.plural(), self.pick(&ADJECTIVES).into(), "هستند".into()]);
            }
            5 => {
                tokens.push(pron.into());
                let negated = self.rng.gen_bool(0.2);
                tokens.push(self.present(person, negated, None));
            }
            6 => {
                tokens.extend([pron.into(), self.noun().into(), "را".into(), "به".into(), other.into()]);
                tokens.push(self.past(person, Some(true)));
            }
            7 => {
                tokens.extend(["اگر".into(), pron.into(), self.subjunctive(person), "،".into()]);
                tokens.extend([self.noun().into(), self.pick(&ADJECTIVES).into(), "است".into()]);
            }
            8 => {
                let n = NOUNS_AN[self.rng.gen_range(0..NOUNS_AN.len())];
                tokens.extend([
                    n.into(),
                    "و".into(),
                    self.noun().into(),
                    self.pick(&ADJECTIVES).into(),
                    "هستند".into(),
                ]);
            }
            9 => {
                tokens.extend(["دیگر".into(), self.noun().into(), self.pick(&ADJECTIVES).into(), "نیست".into()]);
            }
            10 => {
                tokens.extend([pron.into(), "در".into(), self.noun().into()]);
                tokens.push(self.present(person, false, None));
            }
            11 => {
                tokens.extend([
                    self.pick(&ADVERBS).into(),
                    self.noun().into(),
                    self.pick(&ADJECTIVES).into(),
                    "است".into(),
                ]);
            }
            12 => {
                tokens.push(pron.into());
                tokens.push(self.past(person, Some(false)));
                tokens.extend(["که".into(), self.noun().into(), self.pick(&ADJECTIVES).into(), "است".into()]);
            }
            _ => {
                tokens.extend([self.plural(), "را".into(), "به".into(), other.into()]);
                tokens.push(self.past(person, Some(true)));
            }
        }
        tokens.push(self.end().into());
        tokens.join(" ")
    }
}

/// `n` deterministic sentences for a seed.
pub fn sample_sentences(n: usize, seed: u64) -> Vec<String> {
    let mut sampler = Sampler::new(seed);
    (0..n).map(|_| sampler.sentence()).collect()
}
