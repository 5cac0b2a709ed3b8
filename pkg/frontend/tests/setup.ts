// jsdom has no 2D canvas; the app guards for a null context, so return null
// quietly instead of logging "Not implemented" on every render.
HTMLCanvasElement.prototype.getContext = (() => null) as never;

export {};
