// Shared record shapes for the review flow. The batch and session file
// formats mirror the pipeline's line-delimited JSON exactly.

export const QUESTION_TYPES = [
  "Action",
  "Color",
  "Counting",
  "ObjectType",
  "RelativePosition",
  "YesNo",
  "Others",
] as const;

export type QuestionType = (typeof QUESTION_TYPES)[number];

export const QUESTION_TYPE_LABELS: Record<QuestionType, string> = {
  Action: "Action",
  Color: "Color",
  Counting: "Counting",
  ObjectType: "Object Type",
  RelativePosition: "Relative Position",
  YesNo: "Yes/No",
  Others: "Others",
};

export interface TurnRecord {
  question: string;
  answer: string;
}

export interface SampleRecord {
  id: string;
  image: string;
  task: string;
  turns: TurnRecord[];
  provenance: string;
}

export interface BatchHeader {
  kind: "eval_batch";
  batch_id: string;
  tag: string;
  seed: number;
  n: number;
  source?: string;
}

export interface Judgment {
  type: QuestionType;
  correct: boolean;
  timestamp: string;
}

export interface Box {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  /** raw decimal strings, kept for exact pixel math */
  raw: [string, string, string, string];
}

export interface ReviewItem {
  sample: SampleRecord;
  imageUrl: string;
  boxes: Box[];
  judgment: Judgment | null;
}
