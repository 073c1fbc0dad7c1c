/** Payload shapes of the experiment service HTTP API.
 *
 * Mirrored by hand from the service responses; the frontend talks only
 * to the HTTP endpoints and never imports server code.
 */

export interface AppConfig {
  api_base: string;
  modes: string[];
}

export interface SessionInfo {
  session_id: string;
  mode: string;
  participant_id: string;
  dialogue_id: string | null;
  n_items: number;
  cursor: number;
  completed: boolean;
}

export interface CandidateTile {
  image_id: string;
  uri: string;
  /** holistic only: image was already ranked at this point of the game */
  ranked?: boolean;
}

export interface UtteranceLine {
  index: number;
  speaker: string;
  text: string;
}

export interface MentionRef {
  utterance_index: number;
  span: [number, number];
  surface: string;
}

export interface DoneStimulus {
  done: true;
  completion_code: string;
}

export interface IndependentStimulus {
  done: false;
  mode: "independent";
  item_id: string;
  index: number;
  n_items: number;
  description: string;
  candidates: CandidateTile[];
  multi_select: false;
}

export interface HolisticStimulus {
  done: false;
  mode: "holistic";
  item_id: string;
  index: number;
  n_items: number;
  utterances: UtteranceLine[];
  mention: MentionRef;
  candidates: CandidateTile[];
  multi_select: true;
}

export type ActiveStimulus = IndependentStimulus | HolisticStimulus;
export type Stimulus = DoneStimulus | ActiveStimulus;

export interface SubmitPayload {
  item_id: string;
  selected_image_ids: string[];
  latency_ms: number;
}

export interface SubmitResult {
  cursor: number;
  completed: boolean;
  replayed: boolean;
  completion_code?: string | null;
}
