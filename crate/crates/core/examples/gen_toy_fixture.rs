//! Regenerates the bundled toy fixture under `fixtures/toy/`.
//!
//!     cargo run -p qmatch-core --example gen_toy_fixture -- fixtures/toy
//!
//! Vectors are seeded pseudo-embeddings: each latent topic has a random
//! centroid, and a question's vector is its centroid plus a random offset.
//! The `wide` source uses these directly; the `narrow` source adds a large
//! shared component so every pair looks similar.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use qmatch_core::corpus::SentenceRecord;
use qmatch_core::embeddings::{EmbeddingSet, EmbeddingFormat, save_embeddings};
use qmatch_core::evaluator::EvalLabel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const DIM: usize = 32;
const SEED: u64 = 20210601;
const QUESTION_SPREAD: f64 = 1.6;
const EXEMPLAR_SPREAD: f64 = 0.9;
const SHARED_WEIGHT: f64 = 2.5;

const PRICING: &[&str] = &[
    "How much does it cost?",
    "What is the price for subscription?",
    "How much is the basic plan?",
    "How much is the premium plan per month?",
    "What would the enterprise tier cost us?",
    "Is there a discount if we pay annually?",
    "What's the monthly fee?",
    "How much do you charge per user?",
    "Can you tell me the price again?",
    "Is the setup fee included in that price?",
    "What does the starter package run?",
    "How much would it be for ten seats?",
    "Do you have any cheaper options?",
    "What's the cost after the trial ends?",
    "Is that price per month or per year?",
    "How much extra is the add-on?",
    "What's your best price on this?",
    "Are there any hidden fees?",
    "How much is shipping included in the quote?",
    "What would the total come to?",
    "Is there a price difference between the plans?",
    "How much is it to upgrade?",
    "What's the rate for nonprofits?",
    "How much for the annual license?",
    "Can you match a competitor's price?",
    "What does it cost to add another location?",
    "How much is the yearly subscription?",
    "Is tax included in that amount?",
    "What's the per-minute rate for calls?",
    "How much would the team plan cost?",
    "Is the price locked in for the contract term?",
    "How much is the installation?",
    "What's the cheapest plan you have?",
    "Do you charge for overages?",
    "How much is it without the hardware?",
    "What's the price if we commit to two years?",
    "How much is it for a small business?",
    "Can I get a quote for twenty users?",
    "What do you charge for premium support?",
    "How expensive is the international add-on?",
];

const CONTACT: &[&str] = &[
    "What's the best number to reach you at?",
    "Can you spell your last name for me?",
    "What email should I send it to?",
    "Could I get your direct line?",
    "Who should I ask for when I call back?",
    "Can I have your extension?",
    "What's your first name again?",
    "Is there an email address for billing questions?",
    "Can you give me a callback number?",
    "What's the address of your office?",
    "Should I contact you or your manager?",
    "Can I get the account manager's email?",
    "What's your fax number?",
    "Could you repeat that phone number?",
    "Who am I speaking with?",
    "Can I text you at this number?",
    "What's the support email?",
    "Could you give me your cell number?",
    "Is this the best email to reach you?",
    "What's the mailing address for the contract?",
    "Can you send me your contact details?",
    "Do you have a LinkedIn I can message?",
    "What's your colleague's name?",
    "Can I get the technician's phone number?",
    "Where can I email the signed form?",
    "What number do I call after hours?",
    "Could you tell me your full name?",
    "What's the sales team's email address?",
    "Is there a direct number for your department?",
    "Can I reach you on this line tomorrow?",
];

const OTHER_TOPICS: &[(&str, &[&str])] = &[
    (
        "scheduling",
        &[
            "Can we move the meeting to Thursday?",
            "When is the technician coming?",
            "Are you available tomorrow afternoon?",
            "What time works best for the demo?",
            "Can we reschedule the installation?",
            "How long will the appointment take?",
            "Is next Monday open?",
            "Could we push the call back an hour?",
            "When's the earliest slot you have?",
            "Can you book me for the morning?",
            "Will the training be on Friday?",
            "Do you work weekends?",
            "Can I cancel my appointment?",
            "What day is the onboarding session?",
            "Can we set up a follow-up next week?",
            "Is the demo still on for today?",
            "How soon can someone come out?",
            "Can we do the call at noon instead?",
            "When does the window for delivery start?",
            "Can we meet after lunch?",
            "Are you free later this week?",
            "What time zone is that in?",
            "Can the visit happen before ten?",
            "Do I need to be home for the install?",
            "When should I expect the callback?",
        ],
    ),
    (
        "shipping",
        &[
            "When will my order arrive?",
            "Has the package shipped yet?",
            "Can I get a tracking number?",
            "Do you ship to Canada?",
            "Why is my delivery late?",
            "Can you send it overnight?",
            "Which carrier do you use?",
            "Can I change the delivery address?",
            "Is signature required on delivery?",
            "How long does ground shipping take?",
            "Where is my package right now?",
            "Can you ship to a PO box?",
            "Will it come in one box or several?",
            "Can I pick it up instead?",
            "Did the replacement go out?",
            "Is the order on backorder?",
            "Can you expedite the shipment?",
            "What happens if nobody is home?",
            "Do you deliver on Saturdays?",
            "Was the package left at the door?",
            "Can I return it by mail?",
            "Is the return label included?",
            "How do I send back the old unit?",
            "Why does tracking show no movement?",
            "Can you split the shipment?",
        ],
    ),
    (
        "support",
        &[
            "Why does the app keep crashing?",
            "How do I reset my password?",
            "Is the outage affecting my area?",
            "Can you walk me through the setup?",
            "Why can't I log in?",
            "Is there a fix for the sync issue?",
            "How do I update the firmware?",
            "Why is the call quality so bad?",
            "Can you check my connection?",
            "What does this error code mean?",
            "How do I forward calls to my cell?",
            "Why is the voicemail not working?",
            "Can you restart the service on your end?",
            "Is there a known bug with the latest update?",
            "How do I export my data?",
            "Why is the dashboard blank?",
            "Can you open a ticket for this?",
            "How do I add a new user?",
            "Why are my emails bouncing?",
            "Is the server down right now?",
            "How do I connect the headset?",
            "Why does it say my license expired?",
            "Can you escalate this issue?",
            "How do I turn off notifications?",
            "Why is the integration failing?",
        ],
    ),
    (
        "account",
        &[
            "Can you cancel my account?",
            "How do I change the billing card?",
            "Why was I charged twice?",
            "Can I get a refund for last month?",
            "When does my contract renew?",
            "Can you add my partner to the account?",
            "How do I close the old account?",
            "Where can I see my invoices?",
            "Can I transfer the account to my company?",
            "Why did my bill go up?",
            "Can I pause my subscription?",
            "What's the name of the company?",
            "Who owns the account now?",
            "Can you update my company name?",
            "Is my account in good standing?",
            "Can I downgrade without a penalty?",
            "Why is there a late fee?",
            "How do I get a copy of the contract?",
            "Can you merge my two accounts?",
            "What's the account number?",
            "Can I change the plan mid-cycle?",
            "Why was my payment declined?",
            "Is autopay turned on?",
            "Can you remove the extra line?",
            "Do I need to sign anything to cancel?",
        ],
    ),
    (
        "features",
        &[
            "Does it integrate with Salesforce?",
            "Can it record calls automatically?",
            "Is there a mobile app?",
            "Does the plan include video meetings?",
            "Can I set up an auto attendant?",
            "Does it support call queues?",
            "Is there an API we can use?",
            "Can it transcribe voicemails?",
            "Does it work with our existing phones?",
            "What's the total height of the vehicle?",
            "Can we brand it with our logo?",
            "Is there a limit on storage?",
            "Does it support single sign-on?",
            "Can agents see real-time analytics?",
            "Is there a desktop client for Mac?",
            "Does it offer international numbers?",
            "Can I port my existing number?",
            "Is hold music customizable?",
            "Does it have call whisper?",
            "Can managers listen in on calls?",
            "Is SMS included?",
            "Does it support fax?",
            "Can it route calls by skill?",
            "Is there a conference bridge?",
            "Does it handle after-hours routing?",
        ],
    ),
    (
        "onboarding",
        &[
            "Who will help us get set up?",
            "Is there a training video for new staff?",
            "How long does onboarding usually take?",
            "Can you migrate our old contacts?",
            "Do you import data from spreadsheets?",
            "Will someone configure the phones for us?",
            "Is there a checklist for going live?",
            "Can we run a pilot with one team first?",
            "How do I invite my coworkers?",
            "What do we need before the kickoff call?",
            "Can you set up our greeting message?",
            "Who is our onboarding specialist?",
            "Do you provide admin training?",
            "Can we keep the old system running in parallel?",
            "How do we set permissions for managers?",
            "Is there a sandbox we can try?",
            "What happens on day one?",
            "Can you help us design the call flow?",
            "Do we get a dedicated setup contact?",
            "How do I assign numbers to users?",
            "Can the rollout happen in phases?",
            "Is there documentation for the admin portal?",
            "Do you offer a live walkthrough?",
            "How do we test before switching over?",
            "Can we schedule the cutover for a weekend?",
        ],
    ),
    (
        "security",
        &[
            "Is the data encrypted at rest?",
            "Are you HIPAA compliant?",
            "Where are your servers located?",
            "Do you support two-factor authentication?",
            "Who can access our call recordings?",
            "How long do you retain our data?",
            "Can we delete recordings on request?",
            "Do you have a SOC 2 report?",
            "Is the connection encrypted?",
            "How do you handle a data breach?",
            "Can we restrict logins by IP address?",
            "Do employees see our transcripts?",
            "Is there an audit log?",
            "Can we sign a data processing agreement?",
            "Do you run penetration tests?",
            "Are backups stored offsite?",
            "How are passwords stored?",
            "Can admins force a password reset?",
            "Is GDPR covered?",
            "Do you share data with third parties?",
            "Can we get a security questionnaire filled out?",
            "Is single sign-on enforced for all users?",
            "How quickly do you patch vulnerabilities?",
            "Can we mask credit card numbers in recordings?",
            "Who do we report a security issue to?",
        ],
    ),
];

const PRICING_EXEMPLARS: &[&str] = &[
    "How much is it monthly?",
    "What\u{2019}s the lowest price?",
    "What is this like in terms of pricing?",
    "How much do you charge?",
    "What's the price for the monthly subscription?",
    "How much would that cost me?",
    "What's the price per seat?",
    "How much is the plan?",
    "What does it cost per year?",
    "What are your rates?",
];

const CONTACT_EXEMPLARS: &[&str] = &[
    "Can I get your name?",
    "Can you give me your email address?",
    "What is your last name?",
    "Would you mind giving me the phone number?",
];

fn gaussian(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DIM).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn around(rng: &mut ChaCha8Rng, centroid: &[f64], spread: f64) -> Vec<f64> {
    let noise = unit(&gaussian(rng));
    centroid.iter().zip(&noise).map(|(c, e)| c + spread * e).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    // round to 6 significant digits so the text files stay readable
    v.iter().map(|&x| format!("{x:.6}").parse::<f32>().unwrap()).collect()
}

fn write_jsonl<T: serde::Serialize>(path: &PathBuf, items: &[T]) {
    let mut out = BufWriter::new(File::create(path).unwrap());
    for item in items {
        serde_json::to_writer(&mut out, item).unwrap();
        out.write_all(b"\n").unwrap();
    }
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/toy".into()));
    fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut groups: Vec<(&str, &[&str])> = vec![("pricing", PRICING), ("contact", CONTACT)];
    groups.extend_from_slice(OTHER_TOPICS);
    let centroids: Vec<Vec<f64>> = groups.iter().map(|_| unit(&gaussian(&mut rng))).collect();
    let shared = unit(&gaussian(&mut rng));

    let mut records = Vec::new();
    let mut wide = Vec::new();
    let mut latent = Vec::new();
    let mut n = 0;
    for (g, (name, texts)) in groups.iter().enumerate() {
        for text in texts.iter() {
            n += 1;
            let id = format!("q{n:04}");
            let mut record = SentenceRecord::new(&id, *text);
            record.source_call_id = Some(format!("call-{:03}", (n * 7) % 97));
            record.speaker_side = Some(qmatch_core::corpus::SpeakerSide::Customer);
            records.push(record);
            wide.push((id, around(&mut rng, &centroids[g], QUESTION_SPREAD)));
            latent.push(*name);
        }
    }
    let mut exemplar_files = Vec::new();
    for (topic, g, texts) in [("pricing", 0usize, PRICING_EXEMPLARS), ("contact", 1, CONTACT_EXEMPLARS)] {
        let mut ex = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let id = format!("ex-{topic}-{:02}", i + 1);
            ex.push(SentenceRecord::new(&id, *text));
            wide.push((id, around(&mut rng, &centroids[g], EXEMPLAR_SPREAD)));
        }
        exemplar_files.push((topic, ex));
    }

    // deterministic shuffle of corpus order so topics are interleaved
    let mut order: Vec<usize> = (0..records.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i as u64) as usize;
        order.swap(i, j);
    }
    let shuffled: Vec<SentenceRecord> = order.iter().map(|&i| records[i].clone()).collect();
    write_jsonl(&dir.join("corpus.jsonl"), &shuffled);
    for (topic, ex) in &exemplar_files {
        write_jsonl(&dir.join(format!("exemplars_{topic}.jsonl")), ex);
    }

    let mut labels = Vec::new();
    for (topic_name, latent_name) in [("Pricing", "pricing"), ("Contact Information", "contact")] {
        for &i in &order {
            labels.push(EvalLabel {
                sentence_id: records[i].id.clone(),
                topic_name: topic_name.into(),
                relevant: latent[i] == latent_name,
            });
        }
    }
    write_jsonl(&dir.join("labels.jsonl"), &labels);

    let wide_set = EmbeddingSet::from_vectors(
        "toy-wide",
        DIM,
        wide.iter().map(|(id, v)| (id.clone(), to_f32(v))),
    )
    .unwrap();
    let narrow_set = EmbeddingSet::from_vectors(
        "toy-narrow",
        DIM,
        wide.iter().map(|(id, v)| {
            let u = unit(v);
            let cone: Vec<f64> = u.iter().zip(&shared).map(|(x, s)| x + SHARED_WEIGHT * s).collect();
            (id.clone(), to_f32(&cone))
        }),
    )
    .unwrap();
    save_embeddings(&wide_set, &dir.join("embeddings_wide.jsonl"), EmbeddingFormat::Text).unwrap();
    save_embeddings(&narrow_set, &dir.join("embeddings_narrow.jsonl"), EmbeddingFormat::Text).unwrap();
    eprintln!(
        "wrote {} questions, {} exemplar sets, {} labels to {}",
        records.len(),
        exemplar_files.len(),
        labels.len(),
        dir.display()
    );
}
