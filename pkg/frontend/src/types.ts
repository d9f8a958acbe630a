/** Wire types exchanged with the dialogue service. */

export type PanelKind =
  | "PatientSearch"
  | "PatientFinding"
  | "ImageAnnotation"
  | "Browser"
  | "Background";

export type DirectiveAction = "open" | "rearrange" | "highlight" | "close";

export interface SIEDirective {
  action: DirectiveAction;
  panel: PanelKind;
  payload: Record<string, unknown>;
}

export interface SystemResponse {
  sessionId: string;
  speakText: string;
  directives: SIEDirective[];
}

export type TargetKind = "region" | "patient" | "image";

export interface GestureCapture {
  targetKind: TargetKind;
  targetId: string;
  /** client timestamp, ISO-8601 with milliseconds */
  timestamp: string;
}

export interface StreamEvent {
  event: string;
  [key: string]: unknown;
}

export interface EntityRef {
  iri: string;
  label?: string;
  name?: string;
}

export interface SearchRow {
  iri: string;
  name: string;
  score: number;
  explanations?: unknown[];
}

export interface SeriesRow {
  iri: string;
  studyDate: string;
  description: string;
  bodyPart: string;
  modality: string;
  images: { iri: string }[];
  regions: { iri: string; geometry: string; target: { iri: string } }[];
}
