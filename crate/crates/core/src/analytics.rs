//! Corpus-wide predictions and the aggregate reports built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::annotation::ActionClass;
use crate::corpus::{Corpus, Dimension, Ticket};
use crate::features::FeatureSpace;
use crate::hours::Hours;
use crate::models::{ModelError, TrainedModel};
use crate::segmenter::{Fragment, FragmentSet};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model carries no feature space and none was supplied")]
    NoFeatureSpace,
    #[error("total hours over included actions is zero")]
    ZeroHours,
    #[error("nothing to report: the corpus is empty")]
    EmptyCorpus,
    #[error("fragment {fragment_id} refers to unknown ticket {ticket_id}")]
    UnknownTicket { fragment_id: String, ticket_id: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedFragment {
    #[serde(flatten)]
    pub fragment: Fragment,
    pub label: ActionClass,
    pub low_confidence: bool,
}

/// Labels every fragment. Fragments with no known terms get the model's
/// majority training class and `low_confidence`.
///
/// `space` overrides the feature space bundled with the model; either way its
/// fingerprint has to match the one the model was trained on.
pub fn predict_corpus(
    model: &TrainedModel,
    fragments: &FragmentSet,
    space: Option<&FeatureSpace>,
) -> Result<Vec<PredictedFragment>, AnalyticsError> {
    let space = space.or(model.features.as_ref()).ok_or(AnalyticsError::NoFeatureSpace)?;
    let x = space.transform(&fragments.texts());
    let predictions = model.predict_detailed(&x)?;
    let fallback = model.majority_class();
    Ok(fragments
        .fragments
        .iter()
        .zip(predictions)
        .map(|(fragment, p)| PredictedFragment {
            fragment: fragment.clone(),
            label: if p.low_confidence { fallback } else { p.label },
            low_confidence: p.low_confidence,
        })
        .collect())
}

pub fn write_predictions<W: Write>(predicted: &[PredictedFragment], mut out: W) -> std::io::Result<()> {
    for p in predicted {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictedFragment>, AnalyticsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AnalyticsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn default_exclusions() -> BTreeSet<ActionClass> {
    BTreeSet::from([ActionClass::NonCuration])
}

fn policy_tag(exclude: &BTreeSet<ActionClass>) -> String {
    if exclude.is_empty() {
        "none".into()
    } else {
        let names: Vec<&str> = exclude.iter().map(|c| c.as_str()).collect();
        format!("exclude:{}", names.join("+"))
    }
}

/// How fragment hours turn into per-action hours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribution {
    /// Each fragment contributes its apportioned share.
    #[default]
    Fragment,
    /// Each entry's full hours go to every distinct action predicted in it.
    Entry,
}

impl std::str::FromStr for Attribution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fragment" => Ok(Attribution::Fragment),
            "entry" => Ok(Attribution::Entry),
            other => Err(format!("unknown attribution {other:?} (expected fragment or entry)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoursColumn {
    pub attribution: Attribution,
    pub hours: BTreeMap<ActionClass, Hours>,
    /// Share of included hours; excluded actions have no entry.
    pub percent: BTreeMap<ActionClass, f64>,
    pub included_hours: Hours,
    pub excluded_hours: Hours,
}

fn entry_hours(predicted: &[PredictedFragment]) -> BTreeMap<(&str, usize), (Hours, BTreeSet<ActionClass>)> {
    let mut entries: BTreeMap<(&str, usize), (Hours, BTreeSet<ActionClass>)> = BTreeMap::new();
    for p in predicted {
        let slot = entries
            .entry((p.fragment.ticket_id.as_str(), p.fragment.entry_index))
            .or_default();
        slot.0 += p.fragment.apportioned_hours;
        slot.1.insert(p.label);
    }
    entries
}

pub fn hours_by_action(
    predicted: &[PredictedFragment],
    exclude: &BTreeSet<ActionClass>,
    attribution: Attribution,
) -> Result<HoursColumn, AnalyticsError> {
    let mut hours: BTreeMap<ActionClass, Hours> = ActionClass::ALL.iter().map(|&c| (c, Hours::ZERO)).collect();
    match attribution {
        Attribution::Fragment => {
            for p in predicted {
                *hours.get_mut(&p.label).unwrap() += p.fragment.apportioned_hours;
            }
        }
        Attribution::Entry => {
            for (entry_total, actions) in entry_hours(predicted).into_values() {
                for action in actions {
                    *hours.get_mut(&action).unwrap() += entry_total;
                }
            }
        }
    }
    let (mut included, mut excluded) = (Hours::ZERO, Hours::ZERO);
    for (class, &h) in &hours {
        if exclude.contains(class) {
            excluded += h;
        } else {
            included += h;
        }
    }
    if included.is_zero() {
        return Err(AnalyticsError::ZeroHours);
    }
    let percent = hours
        .iter()
        .filter(|(c, _)| !exclude.contains(c))
        .map(|(&c, &h)| (c, 100.0 * h.micros() as f64 / included.micros() as f64))
        .collect();
    Ok(HoursColumn {
        attribution,
        hours,
        percent,
        included_hours: included,
        excluded_hours: excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudiesColumn {
    pub total_studies: usize,
    pub studies: BTreeMap<ActionClass, usize>,
    pub percent: BTreeMap<ActionClass, f64>,
}

/// Share of corpus studies with at least one fragment of each action.
pub fn studies_containing_action(
    predicted: &[PredictedFragment],
    corpus: &Corpus,
    exclude: &BTreeSet<ActionClass>,
) -> Result<StudiesColumn, AnalyticsError> {
    let all = corpus.study_ids();
    if all.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let mut seen: BTreeMap<ActionClass, BTreeSet<&str>> = BTreeMap::new();
    for p in predicted {
        if all.contains(p.fragment.study_id.as_str()) {
            seen.entry(p.label).or_default().insert(&p.fragment.study_id);
        }
    }
    let studies: BTreeMap<ActionClass, usize> = ActionClass::ALL
        .iter()
        .map(|&c| (c, seen.get(&c).map_or(0, BTreeSet::len)))
        .collect();
    let percent = studies
        .iter()
        .filter(|(c, _)| !exclude.contains(c))
        .map(|(&c, &n)| (c, 100.0 * n as f64 / all.len() as f64))
        .collect();
    Ok(StudiesColumn {
        total_studies: all.len(),
        studies,
        percent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionRow {
    pub action: ActionClass,
    pub studies: usize,
    pub percent_of_studies: f64,
    pub fragments: usize,
    pub hours: Hours,
    pub percent_of_hours: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionReport {
    pub exclusion_policy: String,
    pub attribution: Attribution,
    pub total_studies: usize,
    pub included_hours: Hours,
    pub excluded_hours: Hours,
    /// Included actions, most widespread first.
    pub rows: Vec<ActionRow>,
    /// Excluded actions, tallied but kept out of the percentages.
    pub excluded: Vec<ActionRow>,
}

pub const TABLE4_HEADER: [&str; 3] = [
    "Action",
    "Percent of studies containing action",
    "Percent of total work log hours classified as action",
];

pub fn action_report(
    predicted: &[PredictedFragment],
    corpus: &Corpus,
    exclude: &BTreeSet<ActionClass>,
    attribution: Attribution,
) -> Result<ActionReport, AnalyticsError> {
    let studies = studies_containing_action(predicted, corpus, exclude)?;
    let hours = hours_by_action(predicted, exclude, attribution)?;
    let mut fragments = [0usize; 8];
    for p in predicted {
        fragments[p.label.index()] += 1;
    }
    let (mut rows, mut excluded) = (Vec::new(), Vec::new());
    for class in ActionClass::ALL {
        let row = ActionRow {
            action: class,
            studies: studies.studies[&class],
            percent_of_studies: 100.0 * studies.studies[&class] as f64 / studies.total_studies as f64,
            fragments: fragments[class.index()],
            hours: hours.hours[&class],
            percent_of_hours: hours.percent.get(&class).copied().unwrap_or(0.0),
        };
        if exclude.contains(&class) {
            excluded.push(row);
        } else {
            rows.push(row);
        }
    }
    // Stable sort keeps schema order among ties.
    rows.sort_by_key(|r| std::cmp::Reverse(r.studies));
    Ok(ActionReport {
        exclusion_policy: policy_tag(exclude),
        attribution,
        total_studies: studies.total_studies,
        included_hours: hours.included_hours,
        excluded_hours: hours.excluded_hours,
        rows,
        excluded,
    })
}

impl ActionReport {
    pub fn write_csv<W: Write>(&self, out: W, decimals: usize) -> Result<(), AnalyticsError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(TABLE4_HEADER)?;
        for row in &self.rows {
            writer.write_record([
                row.action.display_name().to_string(),
                format!("{:.*}", decimals, row.percent_of_studies),
                format!("{:.*}", decimals, row.percent_of_hours),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Hours each ticket spent on included actions.
pub fn curation_hours_by_ticket(
    predicted: &[PredictedFragment],
    exclude: &BTreeSet<ActionClass>,
) -> BTreeMap<String, Hours> {
    let mut out: BTreeMap<String, Hours> = BTreeMap::new();
    for p in predicted.iter().filter(|p| !exclude.contains(&p.label)) {
        *out.entry(p.fragment.ticket_id.clone()).or_default() += p.fragment.apportioned_hours;
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProportionWeighting {
    #[default]
    Fragments,
    Hours,
}

impl std::str::FromStr for ProportionWeighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fragments" => Ok(ProportionWeighting::Fragments),
            "hours" => Ok(ProportionWeighting::Hours),
            other => Err(format!("unknown weighting {other:?} (expected fragments or hours)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: String,
    /// Fragment count or micro-hours, depending on the weighting.
    pub total: f64,
    pub proportions: BTreeMap<ActionClass, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupedProportions {
    pub key: Dimension,
    pub weighting: ProportionWeighting,
    pub exclusion_policy: String,
    pub groups: Vec<GroupRow>,
    pub warnings: Vec<String>,
}

/// Per-group action proportions over included fragments. Groups without any
/// included weight are dropped with a warning.
pub fn action_proportions_by(
    predicted: &[PredictedFragment],
    corpus: &Corpus,
    key: Dimension,
    exclude: &BTreeSet<ActionClass>,
    weighting: ProportionWeighting,
    archive_allow_list: &[String],
) -> Result<GroupedProportions, AnalyticsError> {
    let tickets: BTreeMap<&str, &Ticket> = corpus.tickets.iter().map(|t| (t.ticket_id.as_str(), t)).collect();
    let group_of = |t: &Ticket| key.group_of(t, archive_allow_list);
    let mut tallies: BTreeMap<String, [u128; 8]> = corpus.tickets.iter().map(|t| (group_of(t), [0; 8])).collect();
    for p in predicted {
        let ticket = tickets
            .get(p.fragment.ticket_id.as_str())
            .ok_or_else(|| AnalyticsError::UnknownTicket {
                fragment_id: p.fragment.fragment_id.clone(),
                ticket_id: p.fragment.ticket_id.clone(),
            })?;
        if exclude.contains(&p.label) {
            continue;
        }
        let weight = match weighting {
            ProportionWeighting::Fragments => 1,
            ProportionWeighting::Hours => p.fragment.apportioned_hours.micros().max(0) as u128,
        };
        tallies.get_mut(&group_of(ticket)).unwrap()[p.label.index()] += weight;
    }
    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    for (group, counts) in tallies {
        let total: u128 = counts.iter().sum();
        if total == 0 {
            warnings.push(format!("group {group} has no included fragments; omitted"));
            continue;
        }
        let proportions = ActionClass::ALL
            .iter()
            .filter(|c| !exclude.contains(c))
            .map(|&c| (c, counts[c.index()] as f64 / total as f64))
            .collect();
        groups.push(GroupRow {
            group,
            total: total as f64,
            proportions,
        });
    }
    Ok(GroupedProportions {
        key,
        weighting,
        exclusion_policy: policy_tag(exclude),
        groups,
        warnings,
    })
}

/// One `(group, action, value)` row for plotting tools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub group: String,
    pub action: String,
    pub value: f64,
}

impl GroupedProportions {
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.proportions.iter().map(move |(action, &value)| PlotRow {
                    group: format!("{}={}", self.key, g.group),
                    action: action.as_str().to_string(),
                    value,
                })
            })
            .collect()
    }
}

pub fn write_plot_csv<W: Write>(rows: &[PlotRow], out: W) -> Result<(), AnalyticsError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
