//! Seeded generators for the three benchmark-shaped datasets.
//!
//! Public copies of the originals are not bundled with the crate, so these
//! produce structural stand-ins: same row counts where it matters, same
//! column roles, same per-column category cardinalities, same missing-value
//! behavior. Labels come from a logistic rule over both parties' columns so
//! the data party's features genuinely improve a trained model.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, DatasetError, DatasetSchema};

/// A generated CSV plus the schema that splits it between the parties.
pub struct Fixture {
    pub name: String,
    pub csv: String,
    pub schema: DatasetSchema,
}

impl Fixture {
    pub fn dataset(&self) -> Result<Dataset, DatasetError> {
        Dataset::from_csv_str(&self.csv, &self.schema)
    }

    /// Writes `<name>.csv` and `<name>.schema.toml` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        let csv_path = dir.join(format!("{}.csv", self.name));
        let schema_path = dir.join(format!("{}.schema.toml", self.name));
        std::fs::write(&csv_path, &self.csv)?;
        let schema_text =
            toml::to_string(&self.schema).expect("schema serializes");
        std::fs::write(&schema_path, schema_text)?;
        Ok((csv_path, schema_path))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Category draw with guaranteed coverage: the first `table.len()` rows walk
/// the category list once, later rows sample by weight.
fn cat<'a>(row: usize, rng: &mut ChaCha8Rng, table: &[(&'a str, f64)]) -> &'a str {
    if row < table.len() {
        return table[row].0;
    }
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (v, w) in table {
        u -= w;
        if u <= 0.0 {
            return v;
        }
    }
    table.last().unwrap().0
}

fn lookup(map: &[(&str, f64)], key: &str) -> f64 {
    map.iter().find(|(k, _)| *k == key).map_or(0.0, |(_, w)| *w)
}

/// Passenger-survival table: 891 rows, 11 original features, expands to
/// 10 task-party and 19 data-party columns. About a fifth of the ages are
/// blank to exercise mean imputation.
pub fn titanic_like(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pclass = [("1st", 0.24), ("2nd", 0.21), ("3rd", 0.55)];
    let sex = [("female", 0.35), ("male", 0.65)];
    let embarked = [("C", 0.19), ("Q", 0.09), ("S", 0.72)];
    let title = [
        ("Master", 0.05),
        ("Miss", 0.20),
        ("Mr", 0.55),
        ("Mrs", 0.15),
        ("Rare", 0.05),
    ];
    let ticket = [
        ("A5", 0.03),
        ("CA", 0.05),
        ("PC", 0.07),
        ("SCParis", 0.02),
        ("SOTONOQ", 0.02),
        ("STONO2", 0.02),
        ("WC", 0.02),
        ("X", 0.77),
    ];
    let deck = [("A", 0.30), ("B", 0.35), ("C", 0.35)];

    let title_w = [("Master", 1.6), ("Miss", 1.0), ("Mr", -1.4), ("Mrs", 1.2), ("Rare", -0.3)];
    let embarked_w = [("C", 0.80), ("Q", -0.15), ("S", -0.40)];
    let ticket_w = [
        ("A5", -0.60),
        ("CA", -0.30),
        ("PC", 0.90),
        ("SCParis", 0.50),
        ("SOTONOQ", -0.80),
        ("STONO2", 0.20),
        ("WC", -0.70),
        ("X", -0.15),
    ];
    let deck_w = [("A", 0.20), ("B", 0.90), ("C", 0.50)];

    let mut csv =
        String::from("Survived,Pclass,Sex,Age,SibSp,Parch,Fare,CabinKnown,Embarked,Title,TicketPrefix,CabinDeck\n");
    for i in 0..891 {
        let pc = cat(i, &mut rng, &pclass);
        let sx = cat(i, &mut rng, &sex);
        let age = 1.0 + 69.0 * (rng.random::<f64>() + rng.random::<f64>()) / 2.0;
        let age_missing = rng.random::<f64>() < 0.199;
        let sibsp = (5.0 * rng.random::<f64>().powi(4)).floor();
        let parch = (4.0 * rng.random::<f64>().powi(5)).floor();
        let fare = match pc {
            "1st" => 30.0 + 90.0 * rng.random::<f64>().powi(2),
            "2nd" => 10.0 + 15.0 * rng.random::<f64>(),
            _ => 4.0 + 10.0 * rng.random::<f64>(),
        };
        let cabin_known = f64::from(
            rng.random::<f64>()
                < match pc {
                    "1st" => 0.77,
                    "2nd" => 0.16,
                    _ => 0.06,
                },
        );
        let em = cat(i, &mut rng, &embarked);
        let ti = cat(i, &mut rng, &title);
        let tk = cat(i, &mut rng, &ticket);
        let dk = cat(i, &mut rng, &deck);

        let mut z = -0.1;
        z += match pc {
            "1st" => 0.5,
            "2nd" => 0.1,
            _ => -0.4,
        };
        z += if sx == "female" { 0.5 } else { -0.5 };
        z += -0.015 * (age - 30.0);
        z += 0.002 * (fare - 33.0);
        z += -0.1 * sibsp + 0.05 * parch + 0.2 * cabin_known;
        z += lookup(&title_w, ti)
            + lookup(&embarked_w, em)
            + lookup(&ticket_w, tk)
            + lookup(&deck_w, dk);
        let y = u8::from(rng.random::<f64>() < sigmoid(z));

        let age_field = if age_missing { String::new() } else { format!("{age:.1}") };
        csv.push_str(&format!(
            "{y},{pc},{sx},{age_field},{sibsp},{parch},{fare:.4},{cabin_known},{em},{ti},{tk},{dk}\n"
        ));
    }

    Fixture {
        name: "titanic".into(),
        csv,
        schema: DatasetSchema {
            label: "Survived".into(),
            task: ["Pclass", "Sex", "Age", "SibSp", "Parch", "Fare", "CabinKnown"]
                .map(String::from)
                .to_vec(),
            data: ["Embarked", "Title", "TicketPrefix", "CabinDeck"].map(String::from).to_vec(),
            ignore: vec![],
        },
    }
}

/// Card-default table: 25 original features, expands to 9 task-party and
/// 21 data-party columns.
pub fn credit_like(seed: u64, rows: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sex = [("F", 0.6), ("M", 0.4)];
    let education = [("graduate", 0.35), ("high_school", 0.17), ("university", 0.48)];
    let marriage = [("married", 0.45), ("other", 0.02), ("single", 0.53)];

    let mut csv = String::from(
        "default,LIMIT_BAL,AGE,BILL_AMT1,BILL_AMT2,BILL_AMT3,BILL_AMT4,PAY_AMT1,PAY_AMT2,PAY_AMT3,\
         SEX,EDUCATION,MARRIAGE,PAY_0,PAY_2,PAY_3,PAY_4,PAY_5,PAY_6,BILL_AMT5,BILL_AMT6,PAY_AMT4,PAY_AMT5,PAY_AMT6,BILL_RATIO,TENURE\n",
    );
    for i in 0..rows {
        let sx = cat(i, &mut rng, &sex);
        let ed = cat(i, &mut rng, &education);
        let ma = cat(i, &mut rng, &marriage);
        let limit = ((10_000.0 + 490_000.0 * rng.random::<f64>().powi(3)) / 1000.0).round() * 1000.0;
        let age = (21.0 + 54.0 * rng.random::<f64>().powi(2)).round();
        let risk: f64 = rng.random(); // latent repayment discipline
        let pay_status = |rng: &mut ChaCha8Rng, risk: f64| -> i64 {
            let raw = 9.0 * (risk - 0.55) + 2.0 * (rng.random::<f64>() - 0.5);
            (raw.round() as i64).clamp(-2, 8)
        };
        let p0 = pay_status(&mut rng, risk);
        let p2 = pay_status(&mut rng, risk);
        let p3 = pay_status(&mut rng, risk);
        let p4 = pay_status(&mut rng, risk);
        let p5 = pay_status(&mut rng, risk);
        let p6 = pay_status(&mut rng, risk);
        let util = 0.05 + 0.85 * (0.4 * risk + 0.6 * rng.random::<f64>());
        let bill: Vec<f64> = (0..6)
            .map(|m| limit * util * (1.0 - 0.05 * m as f64) * (0.8 + 0.4 * rng.random::<f64>()))
            .collect();
        let pay_amt: Vec<f64> =
            (0..6).map(|m| bill[m] * (0.02 + 0.25 * (1.0 - risk) * rng.random::<f64>())).collect();
        let bill_ratio = bill[4] / limit;
        let tenure = (3.0 + 117.0 * rng.random::<f64>()).round();

        let z_limit = (limit - 170_000.0) / 130_000.0;
        let mut z = -2.1;
        z += 0.55 * p0 as f64 + 0.25 * p2 as f64 + 0.15 * p3 as f64;
        z += 0.05 * (p4 + p5 + p6) as f64;
        z += 0.9 * bill_ratio - 0.3 * z_limit;
        z += lookup(&[("graduate", -0.15), ("high_school", 0.2), ("university", 0.0)], ed);
        z += lookup(&[("married", 0.05), ("single", -0.05), ("other", 0.1)], ma);
        z += if sx == "M" { 0.05 } else { -0.05 };
        z += 0.2 * (bill[0] / limit - util);
        let y = u8::from(rng.random::<f64>() < sigmoid(z));

        csv.push_str(&format!(
            "{y},{limit},{age},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{sx},{ed},{ma},{p0},{p2},{p3},{p4},{p5},{p6},{:.2},{:.2},{:.2},{:.2},{:.2},{bill_ratio:.5},{tenure}\n",
            bill[0], bill[1], bill[2], bill[3], pay_amt[0], pay_amt[1], pay_amt[2],
            bill[4], bill[5], pay_amt[3], pay_amt[4], pay_amt[5],
        ));
    }

    Fixture {
        name: "credit".into(),
        csv,
        schema: DatasetSchema {
            label: "default".into(),
            task: [
                "LIMIT_BAL", "AGE", "BILL_AMT1", "BILL_AMT2", "BILL_AMT3", "BILL_AMT4",
                "PAY_AMT1", "PAY_AMT2", "PAY_AMT3",
            ]
            .map(String::from)
            .to_vec(),
            data: [
                "SEX", "EDUCATION", "MARRIAGE", "PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5",
                "PAY_6", "BILL_AMT5", "BILL_AMT6", "PAY_AMT4", "PAY_AMT5", "PAY_AMT6",
                "BILL_RATIO", "TENURE",
            ]
            .map(String::from)
            .to_vec(),
            ignore: vec![],
        },
    }
}

const EDUCATION: [(&str, f64); 16] = [
    ("10th", 0.03),
    ("11th", 0.04),
    ("12th", 0.01),
    ("1st-4th", 0.01),
    ("5th-6th", 0.01),
    ("7th-8th", 0.02),
    ("9th", 0.02),
    ("Assoc-acdm", 0.03),
    ("Assoc-voc", 0.04),
    ("Bachelors", 0.16),
    ("Doctorate", 0.01),
    ("HS-grad", 0.32),
    ("Masters", 0.05),
    ("Preschool", 0.01),
    ("Prof-school", 0.02),
    ("Some-college", 0.22),
];

fn education_rank(e: &str) -> f64 {
    match e {
        "Preschool" => 1.0,
        "1st-4th" => 2.0,
        "5th-6th" => 3.0,
        "7th-8th" => 4.0,
        "9th" => 5.0,
        "10th" => 6.0,
        "11th" => 7.0,
        "12th" => 8.0,
        "HS-grad" => 9.0,
        "Some-college" => 10.0,
        "Assoc-voc" => 11.0,
        "Assoc-acdm" => 12.0,
        "Bachelors" => 13.0,
        "Masters" => 14.0,
        "Prof-school" => 15.0,
        _ => 16.0, // Doctorate
    }
}

/// Census-income table: 14 original features, expands to 52 task-party and
/// 36 data-party columns. The label is a string pair to exercise the
/// two-distinct-values mapping.
pub fn adult_like(seed: u64, rows: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let occupation = [
        ("Adm-clerical", 0.12),
        ("Armed-Forces", 0.01),
        ("Craft-repair", 0.13),
        ("Exec-managerial", 0.13),
        ("Farming-fishing", 0.03),
        ("Handlers-cleaners", 0.04),
        ("Machine-op-inspct", 0.06),
        ("Other-service", 0.10),
        ("Priv-house-serv", 0.01),
        ("Prof-specialty", 0.13),
        ("Protective-serv", 0.02),
        ("Sales", 0.11),
        ("Tech-support", 0.03),
        ("Transport-moving", 0.05),
        ("Unknown", 0.03),
    ];
    let workclass = [
        ("Federal-gov", 0.03),
        ("Local-gov", 0.06),
        ("Never-worked", 0.01),
        ("Private", 0.70),
        ("Self-emp-inc", 0.03),
        ("Self-emp-not-inc", 0.08),
        ("State-gov", 0.04),
        ("Unknown", 0.04),
        ("Without-pay", 0.01),
    ];
    let marital = [
        ("Divorced", 0.14),
        ("Married-AF-spouse", 0.01),
        ("Married-civ-spouse", 0.46),
        ("Married-spouse-absent", 0.01),
        ("Never-married", 0.33),
        ("Separated", 0.03),
        ("Widowed", 0.02),
    ];
    let race = [
        ("Amer-Indian-Eskimo", 0.01),
        ("Asian-Pac-Islander", 0.03),
        ("Black", 0.10),
        ("Other", 0.01),
        ("White", 0.85),
    ];
    let country = [
        ("Cambodia", 0.004),
        ("Canada", 0.005),
        ("China", 0.004),
        ("Cuba", 0.004),
        ("England", 0.004),
        ("Germany", 0.005),
        ("Greece", 0.002),
        ("Honduras", 0.002),
        ("India", 0.004),
        ("Iran", 0.002),
        ("Ireland", 0.002),
        ("Italy", 0.003),
        ("Jamaica", 0.003),
        ("Japan", 0.003),
        ("Mexico", 0.02),
        ("Philippines", 0.006),
        ("Poland", 0.002),
        ("Portugal", 0.002),
        ("Puerto-Rico", 0.004),
        ("South", 0.003),
        ("United-States", 0.91),
        ("Vietnam", 0.003),
    ];
    let relationship = [
        ("Husband", 0.40),
        ("Not-in-family", 0.26),
        ("Other-relative", 0.03),
        ("Own-child", 0.16),
        ("Unmarried", 0.10),
        ("Wife", 0.05),
    ];
    let sex = [("Female", 0.33), ("Male", 0.67)];

    let occ_w = [
        ("Exec-managerial", 0.8),
        ("Prof-specialty", 0.7),
        ("Tech-support", 0.3),
        ("Sales", 0.2),
        ("Protective-serv", 0.3),
        ("Craft-repair", 0.1),
        ("Other-service", -0.6),
        ("Handlers-cleaners", -0.6),
        ("Priv-house-serv", -1.0),
        ("Farming-fishing", -0.4),
        ("Machine-op-inspct", -0.3),
        ("Adm-clerical", -0.1),
        ("Transport-moving", 0.0),
        ("Armed-Forces", 0.0),
        ("Unknown", -0.5),
    ];
    let wc_w = [
        ("Self-emp-inc", 0.5),
        ("Federal-gov", 0.3),
        ("Local-gov", 0.1),
        ("State-gov", 0.1),
        ("Private", 0.0),
        ("Self-emp-not-inc", 0.1),
        ("Without-pay", -1.0),
        ("Never-worked", -1.2),
        ("Unknown", -0.6),
    ];
    let marital_w = [
        ("Married-civ-spouse", 1.0),
        ("Married-AF-spouse", 0.8),
        ("Never-married", -0.8),
        ("Divorced", -0.3),
        ("Separated", -0.5),
        ("Widowed", -0.4),
        ("Married-spouse-absent", -0.5),
    ];
    let rel_w = [
        ("Husband", 0.5),
        ("Wife", 0.6),
        ("Own-child", -1.0),
        ("Not-in-family", -0.3),
        ("Other-relative", -0.7),
        ("Unmarried", -0.4),
    ];
    let country_w = [("India", 0.3), ("Mexico", -0.5), ("United-States", 0.05)];

    let mut csv = String::from(
        "income,education,occupation,workclass,marital_status,race,\
         native_country,relationship,sex,age,fnlwgt,education_num,capital_gain,capital_loss,hours_per_week\n",
    );
    for i in 0..rows {
        let ed = cat(i, &mut rng, &EDUCATION);
        let oc = cat(i, &mut rng, &occupation);
        let wc = cat(i, &mut rng, &workclass);
        let ms = cat(i, &mut rng, &marital);
        let ra = cat(i, &mut rng, &race);
        let co = cat(i, &mut rng, &country);
        let re = cat(i, &mut rng, &relationship);
        let sx = cat(i, &mut rng, &sex);
        let age = (17.0 + 62.0 * rng.random::<f64>().powf(1.3)).round();
        let fnlwgt = (12_000.0 + 880_000.0 * rng.random::<f64>().powi(3)).round();
        let edu_num = education_rank(ed);
        let cap_gain = if rng.random::<f64>() < 0.08 {
            (300.0 + 60_000.0 * rng.random::<f64>().powi(3)).round()
        } else {
            0.0
        };
        let cap_loss = if rng.random::<f64>() < 0.05 {
            (200.0 + 3_000.0 * rng.random::<f64>().powi(2)).round()
        } else {
            0.0
        };
        let hours = if rng.random::<f64>() < 0.55 {
            40.0
        } else {
            (20.0 + 60.0 * rng.random::<f64>()).round()
        };

        let mut z = -2.7;
        z += 0.25 * (edu_num - 9.0);
        z += lookup(&occ_w, oc) + lookup(&wc_w, wc) + lookup(&marital_w, ms);
        z += lookup(&[("White", 0.05), ("Asian-Pac-Islander", 0.05)], ra);
        z += 0.045 * (age - 38.0) + 0.035 * (hours - 40.0);
        z += 0.00025 * cap_gain + 0.0006 * cap_loss;
        z += lookup(&rel_w, re) + lookup(&country_w, co);
        z += if sx == "Male" { 0.25 } else { -0.25 };
        let label = if rng.random::<f64>() < sigmoid(z) { ">50K" } else { "<=50K" };

        csv.push_str(&format!(
            "{label},{ed},{oc},{wc},{ms},{ra},{co},{re},{sx},{age},{fnlwgt},{edu_num},{cap_gain},{cap_loss},{hours}\n"
        ));
    }

    Fixture {
        name: "adult".into(),
        csv,
        schema: DatasetSchema {
            label: "income".into(),
            task: ["education", "occupation", "workclass", "marital_status", "race"]
                .map(String::from)
                .to_vec(),
            data: [
                "native_country", "relationship", "sex", "age", "fnlwgt", "education_num",
                "capital_gain", "capital_loss", "hours_per_week",
            ]
            .map(String::from)
            .to_vec(),
            ignore: vec![],
        },
    }
}
