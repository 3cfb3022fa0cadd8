use crate::error::{Error, Result};
use crate::seqmodel::{Sequence, SequenceType};

pub const CROSSING: &str = "crossing";
pub const NOT_CROSSING: &str = "not-crossing";

/// Labels every frame from the sequence type. Stopping and starting
/// sequences switch label `pred_ahead` frames before the event instant
/// (clamped at the first frame).
pub fn label_with_pred_ahead(sequence: &Sequence, pred_ahead: usize) -> Result<Sequence> {
    let len = sequence.len();
    let switch_at = || {
        sequence
            .event_instant()
            .map(|e| e.saturating_sub(pred_ahead))
            .ok_or_else(|| Error::InvalidSequence {
                id: sequence.id().to_string(),
                reason: format!("{} sequence needs an event instant", sequence.sequence_type()),
            })
    };
    let labels: Vec<&str> = match sequence.sequence_type() {
        SequenceType::ContinuousCrossing => vec![CROSSING; len],
        SequenceType::Standing => vec![NOT_CROSSING; len],
        SequenceType::Stopping => {
            let s = switch_at()?;
            (0..len).map(|t| if t >= s { NOT_CROSSING } else { CROSSING }).collect()
        }
        SequenceType::Starting => {
            let s = switch_at()?;
            (0..len).map(|t| if t >= s { CROSSING } else { NOT_CROSSING }).collect()
        }
        SequenceType::Generic => {
            return Err(Error::InvalidSequence {
                id: sequence.id().to_string(),
                reason: "generic sequences have no labeling rule".into(),
            })
        }
    };
    sequence.with_labels(labels.into_iter().map(|l| Some(vec![l.to_string()])).collect())
}
