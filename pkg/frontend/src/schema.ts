/**
 * Input schema shared with the prediction service.
 *
 * The numeric ranges here mirror the service's request validation exactly
 * (inclusive bounds), so the form reaches the same accept/reject decision
 * the server would. Units are the ones the service documents for its CSV
 * columns and must appear verbatim on the input labels.
 */

export type NumericName =
  | "age"
  | "bmi"
  | "waist"
  | "pulse"
  | "systolic"
  | "diastolic"
  | "fpg";

export interface NumericField {
  name: NumericName;
  label: string;
  unit: string;
  min: number;
  max: number;
  step: number;
}

export const NUMERIC_FIELDS: readonly NumericField[] = [
  { name: "age", label: "Age", unit: "years", min: 18, max: 120, step: 1 },
  { name: "bmi", label: "BMI", unit: "kg/m2", min: 10, max: 80, step: 0.1 },
  { name: "waist", label: "Waist", unit: "cm", min: 40, max: 220, step: 0.5 },
  { name: "pulse", label: "Pulse", unit: "bpm", min: 30, max: 220, step: 1 },
  { name: "systolic", label: "Systolic BP", unit: "mmHg", min: 70, max: 260, step: 1 },
  { name: "diastolic", label: "Diastolic BP", unit: "mmHg", min: 30, max: 160, step: 1 },
  { name: "fpg", label: "Fasting glucose", unit: "mg/dL", min: 30, max: 300, step: 1 },
];

export const SEX_VALUES = ["male", "female"] as const;

export const RACE_VALUES = [
  "mexican_american",
  "other_hispanic",
  "non_hispanic_white",
  "non_hispanic_black",
  "other_multi",
] as const;

export type Sex = (typeof SEX_VALUES)[number];
export type Race = (typeof RACE_VALUES)[number];

/** Feature payload of a prediction request; absent keys are simply omitted. */
export interface Features {
  age?: number;
  bmi?: number;
  waist?: number;
  pulse?: number;
  systolic?: number;
  diastolic?: number;
  fpg?: number;
  sex?: Sex;
  race?: Race;
}

/** The only inputs the simplified models accept; the rest are masked out. */
export const SIMPLIFIED_FIELDS: readonly NumericName[] = ["bmi", "fpg"];

export type TaskId = "homa_class" | "tyg_class" | "mets_class" | "mets_regress";

export interface TaskInfo {
  id: TaskId;
  kind: "classification" | "regression";
  indexLabel: string;
}

/** The three per-criterion probability gauges, in display order. */
export const GAUGE_TASKS: readonly TaskInfo[] = [
  { id: "homa_class", kind: "classification", indexLabel: "HOMA-IR" },
  { id: "tyg_class", kind: "classification", indexLabel: "TyG" },
  { id: "mets_class", kind: "classification", indexLabel: "METS-IR" },
];

/** The numeric index prediction shown next to the gauges. */
export const REGRESS_TASK: TaskInfo = {
  id: "mets_regress",
  kind: "regression",
  indexLabel: "METS-IR",
};

export const ALL_TASKS: readonly TaskInfo[] = [...GAUGE_TASKS, REGRESS_TASK];

/** Positive-class cutoff the service applies to classifier probabilities. */
export const DECISION_THRESHOLD = 0.5;

/** Minimum spacing between /whatif requests while the slider is moving. */
export const WHATIF_INTERVAL_MS = 150;

/** Grid resolution of a what-if sweep across a feature's full range. */
export const WHATIF_POINTS = 50;

export function numericField(name: NumericName): NumericField {
  const field = NUMERIC_FIELDS.find((f) => f.name === name);
  if (!field) throw new Error(`unknown numeric field ${name}`);
  return field;
}
