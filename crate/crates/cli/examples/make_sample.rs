//! Writes the bundled sample corpus under `data/sample/`: 1,100 synthetic
//! PubMed-style records (1,000 survive curation) and matching 384-d
//! document embeddings.
//!
//! Each surviving record draws a topic mixture over 14 themes, from
//! Dirichlet(0.1) or, for one record in ten, Dirichlet(1), and its words
//! from those themes plus a shared background. Its embedding is the
//! mixture of per-theme unit directions plus Gaussian noise, L2-normalised,
//! standing in for a sentence-encoder output.
//!
//! Usage: cargo run --example make_sample -- [out_dir]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use topicscope_core::ingest::{write_corpus_csv, DocumentRecord};
use topicscope_core::synthetic::{categorical, dirichlet};

const THEMES: [&str; 14] = [
    "stuttering stammering fluency disfluency repetitions prolongations blocks onset persistence recovery lidcombe severity syllables rate anxiety fluent clinician avoidance struggle",
    "temperament emotional reactivity regulation behavioral inhibition shyness effortful negative affect questionnaire traits sensitivity adaptation frustration soothability surgency tempering withdrawal",
    "grammar vocabulary morphology syntax narrative comprehension expressive receptive delay impairment sentence verbs standardized late talkers literacy lexical morphosyntax",
    "autism spectrum social joint gestures echolalia pragmatic diagnosis screening nonverbal minimally augmentative repetitive sensory interaction caregiver eye gaze",
    "hearing cochlear implant auditory deaf amplification aids screening perception bilateral unilateral audiology sound detection congenital otitis tinnitus listening",
    "cleft palate velopharyngeal resonance hypernasality articulation surgery repair craniofacial consonants compensatory nasal phonetic lip orthodontic fistula pharyngoplasty",
    "apraxia praxis sequencing prosody dynamic temporal tactile cueing inconsistency vowels dysarthria neuromuscular oral coordination programming ultrasound biofeedback",
    "epilepsy seizures epileptic electroencephalography discharges antiepileptic febrile encephalopathy regression landau kleffner spikes neurological drug focal aphasia status",
    "hyperactivity impulsivity inattention methylphenidate executive working memory symptoms comorbidity stimulant rating teacher inhibitory hyperactive infantile restlessness disruptive",
    "internet addiction screen media smartphone gaming digital television usage online devices hours sedentary problematic technology tablets video dependence",
    "maternal bonding attachment mother postpartum depression dyadic responsiveness breastfeeding prenatal caregiving parenting synchrony stress perinatal touch newborn",
    "emergency department injury triage admission hospital trauma acute visits resuscitation intensive mortality transport sedation nurses physicians critical",
    "bilingual multilingual dual minority dialect cultural linguistic diversity heritage translation interpreter monolingual proficiency switching immigrant families accent",
    "genetic variants chromosome deletion foxp mutation neurodevelopmental genome microdeletion intellectual disability phenotype heritability twins imaging cortical connectivity",
];

const BACKGROUND: &str = "clinical data analysis participants years age group groups significant associated evidence outcomes review systematic effect effects sample cohort risk factors compared higher lower increased reduced measures findings research young early development school reported included showed evaluated control trial randomized scores test model level period months population prevalence national support needs health services quality life assessment therapy intervention treatment speech language communication disorder disorders parents";

const CHILD_WORDS: [&str; 7] = ["children", "childhood", "infants", "toddlers", "pediatric", "adolescents", "preschool"];

const ADULT: &str = "adult adults elderly stroke aphasia dementia parkinson laryngeal voice dysphonia older aging cognitive decline rehabilitation veterans workplace caregivers hospitalized community patients";

const JOURNALS: [&str; 8] = [
    "Journal of Fluency Disorders",
    "Journal of Speech, Language, and Hearing Research",
    "International Journal of Pediatric Otorhinolaryngology",
    "Child Development",
    "Journal of Communication Disorders",
    "American Journal of Speech-Language Pathology",
    "Pediatrics",
    "Developmental Medicine and Child Neurology",
];

const SURNAMES: [&str; 16] = [
    "Smith", "Kim", "Garcia", "Nguyen", "Okafor", "Rossi", "Tanaka", "Novak", "Haddad", "Silva", "Larsen", "Chen",
    "Moreau", "Kowalski", "Patel", "Osei",
];

const FILLER: [&str; 8] = ["the", "of", "and", "in", "with", "for", "to", "among"];

const N_SURVIVORS: usize = 1000;
const N_NON_ENGLISH: usize = 45;
const N_NON_CHILD: usize = 55;
const EMBED_DIM: usize = 384;
const EMBED_NOISE: f64 = 1.0;
const SEED: u64 = 2015;
/// Share of broad, multi-theme records (Dirichlet(1) mixtures).
const REVIEW_SHARE: f64 = 0.1;

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Zipf-like weights so each theme has a few dominant words.
fn zipf(n: usize) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|r| 1.0 / r as f64).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn sentence(rng: &mut ChaCha8Rng, picked: &[&str]) -> String {
    let mut out = Vec::new();
    for (i, w) in picked.iter().enumerate() {
        if i > 0 && rng.random_bool(0.3) {
            out.push(FILLER[rng.random_range(0..FILLER.len())]);
        }
        out.push(w);
    }
    let mut s = out.join(" ");
    if let Some(first) = s.get(0..1) {
        s.replace_range(0..1, &first.to_uppercase());
    }
    s.push('.');
    s
}

fn text(rng: &mut ChaCha8Rng, n: usize, draw: &mut dyn FnMut(&mut ChaCha8Rng) -> &'static str) -> String {
    let mut sentences = Vec::new();
    let mut left = n;
    while left > 0 {
        let len = rng.random_range(6..12).min(left);
        let picked: Vec<&str> = (0..len).map(|_| draw(rng)).collect();
        sentences.push(sentence(rng, &picked));
        left -= len;
    }
    sentences.join(" ")
}

fn authors(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.random_range(1..6);
    (0..n)
        .map(|_| {
            let s = SURNAMES[rng.random_range(0..SURNAMES.len())];
            let i = (b'A' + rng.random_range(0..26u8)) as char;
            format!("{s} {i}")
        })
        .collect()
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/sample".into()));
    std::fs::create_dir_all(&out).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let themes: Vec<Vec<&'static str>> = THEMES.iter().map(|t| words(t)).collect();
    let background = words(BACKGROUND);
    let adult = words(ADULT);
    let weights: Vec<Vec<f64>> = themes.iter().map(|t| zipf(t.len())).collect();
    let bg_weights = zipf(background.len());

    let normal = Normal::new(0.0, 1.0).unwrap();
    let directions: Vec<Vec<f64>> = (0..themes.len())
        .map(|_| {
            let v: Vec<f64> = (0..EMBED_DIM).map(|_| normal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();

    let mut records: Vec<(DocumentRecord, Option<Vec<f64>>)> = Vec::new();
    for i in 0..N_SURVIVORS + N_NON_ENGLISH + N_NON_CHILD {
        let kind = if i < N_SURVIVORS {
            0
        } else if i < N_SURVIVORS + N_NON_ENGLISH {
            1
        } else {
            2
        };
        let mut rec = DocumentRecord::new("", "");
        rec.authors = authors(&mut rng);
        rec.year = Some(rng.random_range(2015..=2025));
        rec.journal = JOURNALS[rng.random_range(0..JOURNALS.len())].to_string();
        let embedding = if kind == 2 {
            let mut draw = |r: &mut ChaCha8Rng| -> &'static str { adult[r.random_range(0..adult.len())] };
            rec.title = text(&mut rng, 8, &mut draw);
            rec.abstract_text = Some(text(&mut rng, 50, &mut draw));
            rec.language = Some("eng".into());
            None
        } else {
            let concentration = if rng.random_bool(REVIEW_SHARE) { 1.0 } else { 0.1 };
            let theta = dirichlet(&mut rng, concentration, themes.len());
            let main = (0..themes.len()).max_by(|&a, &b| theta[a].total_cmp(&theta[b])).unwrap();
            let mut draw = |r: &mut ChaCha8Rng| -> &'static str {
                if r.random_bool(0.3) {
                    background[categorical(r, &bg_weights)]
                } else {
                    let k = categorical(r, &theta);
                    themes[k][categorical(r, &weights[k])]
                }
            };
            let child = CHILD_WORDS[rng.random_range(0..CHILD_WORDS.len())];
            let lead = themes[main][categorical(&mut rng, &weights[main])];
            rec.title = format!("{} in {child}", text(&mut rng, 7, &mut draw).trim_end_matches('.').to_string() + " " + lead);
            let len = rng.random_range(40..70);
            rec.abstract_text = Some(text(&mut rng, len, &mut draw));
            rec.language = match kind {
                1 => Some(["ger", "fre", "spa", "jpn"][rng.random_range(0..4)].to_string()),
                _ if rng.random_bool(0.02) => None,
                _ => Some("eng".into()),
            };
            if rng.random_bool(0.05) {
                rec.abstract_text = None;
            }
            let mut e = vec![0.0; EMBED_DIM];
            for (k, t) in theta.iter().enumerate() {
                for (x, d) in e.iter_mut().zip(&directions[k]) {
                    *x += t * d;
                }
            }
            for x in e.iter_mut() {
                *x += EMBED_NOISE * normal.sample(&mut rng) / (EMBED_DIM as f64).sqrt();
            }
            let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            Some(e.into_iter().map(|x| x / n).collect())
        };
        records.push((rec, embedding.filter(|_| kind == 0)));
    }
    records.shuffle(&mut rng);
    for (i, (rec, _)) in records.iter_mut().enumerate() {
        rec.pmid = (35_000_000 + 7 * i).to_string();
        rec.doi = Some(format!("10.5555/sample.{:04}", i + 1));
    }

    let recs: Vec<DocumentRecord> = records.iter().map(|(r, _)| r.clone()).collect();
    write_corpus_csv(&recs, &out.join("raw.csv")).expect("write corpus");

    let rows: Vec<&Vec<f64>> = records.iter().filter_map(|(_, e)| e.as_ref()).collect();
    let mut s = format!("{} {EMBED_DIM}\n", rows.len());
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:.6}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    std::fs::write(out.join("embeddings.txt"), s).expect("write embeddings");
    println!("{} records, {} with embeddings, written to {}", recs.len(), N_SURVIVORS, out.display());
}
